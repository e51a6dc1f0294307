use cocodiff::checkpoint::Checkpoint;
use cocodiff::config::{run_training, RunConfig};
use cocodiff::dataset::{generate_dataset, SkeletonDataset};
use cocodiff::eval::{embedding_rows, evaluate, run_sweep, sweep_csv, SweepAxis, SweepSpec};
use cocodiff::nn::Parameters;
use cocodiff::train::Hooks;

fn tiny() -> (RunConfig, SkeletonDataset) {
    let mut c = RunConfig::default();
    for (k, v) in [
        ("classes", "3"),
        ("per_class", "4"),
        ("frames", "6"),
        ("topology", "chain:4"),
        ("widths", "4,8"),
        ("strides", "1,2"),
        ("denoiser_hidden", "8"),
        ("text_dim", "8"),
        ("time_embed_dim", "4"),
        ("epochs", "2"),
        ("encoder_epochs", "1"),
        ("diffusion_epochs", "1"),
        ("batch_size", "4"),
        ("warmup_epochs", "0"),
        ("lr_decay_epochs", "1"),
        ("div_pairs", "40"),
    ] {
        c.set(k, v).unwrap();
    }
    c.set_seed(3);
    let ds = generate_dataset(&c.generation_spec()).unwrap();
    (c, ds)
}

#[test]
fn checkpoint_file_roundtrip_preserves_everything() {
    let (cfg, ds) = tiny();
    let ck = run_training(&cfg, &ds, None, false, None, &mut Hooks::default()).unwrap().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let bits = |c: &Checkpoint| c.model().unwrap().to_flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&ck));

    let div = cfg.div_options();
    let (a, b) = (evaluate(&ck, &ds, div).unwrap(), evaluate(&back, &ds, div).unwrap());
    assert_eq!(a.top1.to_bits(), b.top1.to_bits());
    assert_eq!(a.div.to_bits(), b.div.to_bits());
    let (ea, _) = embedding_rows(&ck, &ds, false, 0, 1).unwrap();
    let (eb, _) = embedding_rows(&back, &ds, false, 0, 1).unwrap();
    assert_eq!(ea, eb);
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ckpt");
    std::fs::write(&path, "{\"format\": 1").unwrap();
    assert!(Checkpoint::load(&path).is_err());
    assert!(Checkpoint::load(dir.path().join("absent.ckpt")).is_err());
}

#[test]
fn sweep_rows_cover_grid_times_seeds() {
    let (cfg, ds) = tiny();
    let spec = SweepSpec {
        axis: SweepAxis::Strategy,
        grid: vec!["neither".into(), "bogus".into(), "gcn_only".into()],
        seeds: vec![0, 1],
        base: cfg,
    };
    let rows = run_sweep(&spec, &ds, &ds).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|r| r.outcome.is_err()).count(), 2);
    let csv = sweep_csv(&rows);
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().filter(|l| l.contains(",bogus,")).all(|l| l.contains(",error,")));
    assert_eq!(sweep_csv(&run_sweep(&spec, &ds, &ds).unwrap()), csv);
}

#[test]
fn default_grids_match_ablation_tables() {
    assert_eq!(SweepAxis::Lambda.default_grid().len(), 5);
    assert_eq!(SweepAxis::Steps.default_grid(), ["10", "20", "25", "30", "35", "40"]);
    assert_eq!(SweepAxis::TextGuidance.default_grid().len(), 4);
    assert_eq!(SweepAxis::Strategy.default_grid().len(), 3);
    assert!(run_sweep(
        &SweepSpec {
            axis: SweepAxis::Lambda,
            grid: vec![],
            seeds: vec![0],
            base: RunConfig::default()
        },
        &tiny().1,
        &tiny().1
    )
    .is_err());
}
