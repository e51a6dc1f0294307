//! Coarse (label + synonyms) and fine (action description) text guidance.
//!
//! Texts are encoded by a frozen map into unit vectors of dimension `N`. The
//! default `toy_hash` encoder assigns every token a pseudo-random Gaussian
//! direction keyed by `(encoder_seed, token bytes)` and averages them; an
//! `external` encoder looks texts up in a precomputed embedding file.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassTexts {
    /// Label first, then synonyms.
    pub coarse: Vec<String>,
    pub fine: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextBank {
    pub classes: Vec<ClassTexts>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub vector: Vec<f64>,
    pub source_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    ToyHash,
    External,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy_hash" => Ok(Self::ToyHash),
            "external" => Ok(Self::External),
            _ => Err(Error::config("text.encoder", format!("unknown encoder kind `{s}`"))),
        }
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ToyHash => "toy_hash",
            Self::External => "external",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoderConfig {
    pub embed_dim: usize,
    pub kind: EncoderKind,
    pub seed: u64,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            kind: EncoderKind::ToyHash,
            seed: 0,
        }
    }
}

impl TextEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 8 {
            return Err(Error::config("text.embed_dim", "must be at least 8"));
        }
        Ok(())
    }
}

/// Synonyms and descriptions for the built-in action vocabulary.
fn lexicon(name: &str) -> Option<(&'static [&'static str], &'static [&'static str])> {
    let entry: (&[&str], &[&str]) = match name {
        "wave" => (
            &["waving", "hand wave"],
            &[
                "raise one hand and wave it from side to side",
                "the person lifts an arm and waves the hand to greet",
            ],
        ),
        "kick" => (
            &["kicking", "leg kick"],
            &[
                "swing one leg forward to kick something",
                "the person lifts a foot and kicks forward",
            ],
        ),
        "throw" => (
            &["throwing", "toss"],
            &[
                "pull the arm back and throw an object forward",
                "the person swings the arm overhead to throw a ball",
            ],
        ),
        "clap" => (
            &["clapping", "applaud"],
            &[
                "bring both hands together repeatedly to clap",
                "the person claps palms together in front of the chest",
            ],
        ),
        "squat" => (
            &["squatting", "crouch"],
            &[
                "bend both knees to squat down and stand up again",
                "the person lowers the hips into a squat",
            ],
        ),
        "punch" => (
            &["punching", "strike"],
            &[
                "extend a closed fist forward to punch",
                "the person jabs an arm out in a quick punch",
            ],
        ),
        "reach" => (
            &["reaching", "grab"],
            &[
                "stretch an arm out to reach for an object",
                "the person extends a hand forward to reach a shelf",
            ],
        ),
        "jump" => (
            &["jumping", "hop"],
            &[
                "push off with both legs to jump upward",
                "the person bends and jumps into the air",
            ],
        ),
        "bow" => (
            &["bowing", "bend forward"],
            &[
                "bend the upper body forward to bow",
                "the person lowers the head and torso in a bow",
            ],
        ),
        "stretch" => (
            &["stretching", "extend"],
            &[
                "raise both arms high to stretch the body",
                "the person stretches the arms and back",
            ],
        ),
        "salute" => (
            &["saluting", "military salute"],
            &[
                "raise the right hand to the forehead to salute",
                "the person lifts a hand to the brow in a salute",
            ],
        ),
        "shake hands" => (
            &["handshake", "greet"],
            &[
                "two people grasp right hands to shake hands",
                "the pair reach out and shake hands",
            ],
        ),
        _ => return None,
    };
    Some(entry)
}

/// Instantiate the coarse/fine text bank for a class list.
///
/// Every fine description mentions the class name.
pub fn build_text_bank(class_names: &[String]) -> Result<TextBank> {
    if class_names.is_empty() {
        return Err(Error::config("class_names", "at least one class is required"));
    }
    let mut seen = HashSet::new();
    for name in class_names {
        if name.trim().is_empty() {
            return Err(Error::config("class_names", "class names must be nonempty"));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::config("class_names", format!("duplicate class name `{name}`")));
        }
    }
    let classes = class_names
        .iter()
        .map(|name| {
            let mut coarse = vec![name.clone()];
            let mut fine = Vec::new();
            match lexicon(name) {
                Some((synonyms, descriptions)) => {
                    coarse.extend(synonyms.iter().map(|s| s.to_string()));
                    fine.extend(descriptions.iter().map(|d| format!("{name}: {d}")));
                }
                None => {
                    coarse.push(format!("{name} action"));
                    fine.push(format!("a person performs the {name} motion"));
                    fine.push(format!("someone repeats the {name} movement with the body"));
                }
            }
            ClassTexts { coarse, fine }
        })
        .collect();
    Ok(TextBank { classes })
}

/// Lowercase and split on whitespace and punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// The fixed unit vector of a single token.
pub fn token_vector(seed: u64, token: &str, dim: usize) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(token.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    v
}

/// A text encoder behind the pluggable interface.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    cfg: TextEncoderConfig,
    table: HashMap<String, Vec<f64>>,
}

impl TextEncoder {
    pub fn toy(cfg: TextEncoderConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind != EncoderKind::ToyHash {
            return Err(Error::config("text.encoder", "external encoder needs an embedding file"));
        }
        Ok(Self {
            cfg,
            table: HashMap::new(),
        })
    }

    /// Wrap a precomputed table. Vectors are normalized on load.
    pub fn external(cfg: TextEncoderConfig, table: HashMap<String, Vec<f64>>) -> Result<Self> {
        cfg.validate()?;
        let mut table = table;
        for (text, v) in table.iter_mut() {
            if v.len() != cfg.embed_dim {
                return Err(Error::shape(format!("embedding of {text:?}"), cfg.embed_dim, v.len()));
            }
            if normalize(v) == 0.0 {
                return Err(Error::Encoding(format!("zero embedding for {text:?}")));
            }
        }
        Ok(Self {
            cfg: TextEncoderConfig {
                kind: EncoderKind::External,
                ..cfg
            },
            table,
        })
    }

    pub fn config(&self) -> &TextEncoderConfig {
        &self.cfg
    }

    pub fn encode(&self, text: &str) -> Result<TextEmbedding> {
        let vector = match self.cfg.kind {
            EncoderKind::ToyHash => {
                let tokens = tokenize(text);
                if tokens.is_empty() {
                    return Err(Error::Encoding(format!("{text:?} has no tokens")));
                }
                let mut acc = vec![0.0; self.cfg.embed_dim];
                for tok in &tokens {
                    for (a, x) in acc.iter_mut().zip(token_vector(self.cfg.seed, tok, self.cfg.embed_dim)) {
                        *a += x;
                    }
                }
                acc.iter_mut().for_each(|a| *a /= tokens.len() as f64);
                if normalize(&mut acc) == 0.0 {
                    return Err(Error::Encoding(format!("{text:?} encodes to the zero vector")));
                }
                acc
            }
            EncoderKind::External => self
                .table
                .get(text)
                .cloned()
                .ok_or_else(|| Error::Encoding(format!("no precomputed embedding for {text:?}")))?,
        };
        Ok(TextEmbedding {
            vector,
            source_text: text.to_string(),
        })
    }

    /// `E_l`: normalized mean of the class's coarse text encodings.
    pub fn coarse_embedding(&self, bank: &TextBank, class_id: usize) -> Result<TextEmbedding> {
        let entry = class_entry(bank, class_id)?;
        let mut acc = vec![0.0; self.cfg.embed_dim];
        for text in &entry.coarse {
            for (a, x) in acc.iter_mut().zip(self.encode(text)?.vector) {
                *a += x;
            }
        }
        acc.iter_mut().for_each(|a| *a /= entry.coarse.len() as f64);
        if normalize(&mut acc) == 0.0 {
            return Err(Error::Encoding(format!("coarse texts of class {class_id} cancel out")));
        }
        Ok(TextEmbedding {
            vector: acc,
            source_text: entry.coarse.join(" | "),
        })
    }

    /// `E_f`: encoding of `fine[draw_index mod count]`.
    pub fn fine_embedding(&self, bank: &TextBank, class_id: usize, draw_index: u64) -> Result<TextEmbedding> {
        let entry = class_entry(bank, class_id)?;
        let i = (draw_index % entry.fine.len() as u64) as usize;
        self.encode(&entry.fine[i])
    }
}

fn class_entry(bank: &TextBank, class_id: usize) -> Result<&ClassTexts> {
    bank.classes.get(class_id).ok_or_else(|| {
        Error::Index(format!("class {class_id} not in a bank of {}", bank.classes.len()))
    })
}

/// Precomputed text conditioning for training: `E_l` per class and every
/// `E_f` candidate per class.
#[derive(Debug, Clone)]
pub struct TextConditioning {
    pub coarse: Array2<f64>,
    pub fine: Vec<Array2<f64>>,
}

impl TextConditioning {
    pub fn build(encoder: &TextEncoder, bank: &TextBank) -> Result<Self> {
        let n = encoder.config().embed_dim;
        let c = bank.classes.len();
        let mut coarse = Array2::zeros((c, n));
        let mut fine = Vec::with_capacity(c);
        for k in 0..c {
            let e = encoder.coarse_embedding(bank, k)?;
            coarse.row_mut(k).assign(&ndarray::ArrayView1::from(&e.vector));
            let count = bank.classes[k].fine.len();
            let mut f = Array2::zeros((count, n));
            for j in 0..count {
                let e = encoder.fine_embedding(bank, k, j as u64)?;
                f.row_mut(j).assign(&ndarray::ArrayView1::from(&e.vector));
            }
            fine.push(f);
        }
        Ok(Self { coarse, fine })
    }

    pub fn embed_dim(&self) -> usize {
        self.coarse.ncols()
    }

    /// `[B, N]` coarse rows for the given labels.
    pub fn coarse_rows(&self, labels: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((labels.len(), self.embed_dim()));
        for (i, &l) in labels.iter().enumerate() {
            out.row_mut(i).assign(&self.coarse.row(l));
        }
        out
    }

    /// `[B, N]` fine rows; sample `i` draws description `sample_ids[i] mod count`.
    pub fn fine_rows(&self, labels: &[usize], sample_ids: &[u64]) -> Array2<f64> {
        let mut out = Array2::zeros((labels.len(), self.embed_dim()));
        for (i, (&l, &id)) in labels.iter().zip(sample_ids).enumerate() {
            let f = &self.fine[l];
            out.row_mut(i).assign(&f.row((id % f.nrows() as u64) as usize));
        }
        out
    }
}

/// Read a precomputed-embedding file: a header line
/// `# cocodiff text embeddings v1<TAB>N`, then `text<TAB>x0 x1 ... x(N-1)`.
pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<(usize, HashMap<String, Vec<f64>>)> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim = None;
    let mut table = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let perr = |msg: String| Error::Parse { line: lineno, msg };
        if lineno == 1 {
            let (magic, n) = line
                .split_once('\t')
                .ok_or_else(|| perr("missing embedding header".into()))?;
            if magic != "# cocodiff text embeddings v1" {
                return Err(perr("missing embedding header".into()));
            }
            dim = Some(n.trim().parse::<usize>().map_err(|_| perr(format!("bad dimension `{n}`")))?);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (text, nums) = line
            .split_once('\t')
            .ok_or_else(|| perr("expected text<TAB>values".into()))?;
        let v: Vec<f64> = nums
            .split_ascii_whitespace()
            .map(|x| x.parse().map_err(|_| perr(format!("bad value `{x}`"))))
            .collect::<Result<_>>()?;
        let n = dim.unwrap_or_default();
        if v.len() != n {
            return Err(perr(format!("expected {n} values, found {}", v.len())));
        }
        table.insert(text.to_string(), v);
    }
    let dim = dim.ok_or(Error::Parse {
        line: 1,
        msg: "empty embedding file".into(),
    })?;
    Ok((dim, table))
}

pub fn save_embedding_table(path: impl AsRef<Path>, dim: usize, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("# cocodiff text embeddings v1\t{dim}\n"));
    for (text, v) in rows {
        out.push_str(text);
        out.push('\t');
        let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> TextEncoder {
        TextEncoder::toy(TextEncoderConfig::default()).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("Throw a ball."), vec!["throw", "a", "ball"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("drink  water"), vec!["drink", "water"]);
    }

    #[test]
    fn bank_contract() {
        let bank = build_text_bank(&["throw".to_string()]).unwrap();
        assert_eq!(bank.classes[0].coarse[0], "throw");
        assert!(bank.classes[0].fine.iter().all(|f| f.contains("throw")));

        let names: Vec<String> = (0..6).map(crate::dataset::class_name).collect();
        let bank = build_text_bank(&names).unwrap();
        assert_eq!(bank.classes.len(), 6);
        for (name, c) in names.iter().zip(&bank.classes) {
            assert!(!c.coarse.is_empty());
            assert!(c.fine.len() >= 2);
            assert!(c.fine.iter().all(|f| f.contains(name.as_str())));
        }
        assert_eq!(bank, build_text_bank(&names).unwrap());

        let unknown = build_text_bank(&["zigzag".to_string()]).unwrap();
        assert!(unknown.classes[0].fine.len() >= 2);
        assert!(unknown.classes[0].fine.iter().all(|f| f.contains("zigzag")));
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = build_text_bank(&["a".into(), "a".into()]).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn encode_is_deterministic_and_unit() {
        let enc = toy();
        let a = enc.encode("throw a ball").unwrap();
        let b = enc.encode("throw a ball").unwrap();
        assert_eq!(a, b);
        assert!((dot(&a.vector, &a.vector).sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_token_is_token_vector() {
        let enc = toy();
        let e = enc.encode("Throw!").unwrap();
        assert_eq!(e.vector, token_vector(0, "throw", 64));
    }

    #[test]
    fn empty_text_fails() {
        assert!(matches!(toy().encode(" ... ").unwrap_err(), Error::Encoding(_)));
    }

    #[test]
    fn shared_tokens_raise_cosine() {
        let enc = toy();
        let a = enc.encode("throw ball").unwrap().vector;
        let b = enc.encode("throw ball stone").unwrap().vector;
        let c = enc.encode("read book").unwrap().vector;
        let (ab, ac) = (dot(&a, &b), dot(&a, &c));
        assert!(ab > ac, "cos(ab)={ab} cos(ac)={ac}");
        assert!(ab > 0.7);
    }

    #[test]
    fn coarse_fine_contracts() {
        let enc = toy();
        let bank = TextBank {
            classes: vec![ClassTexts {
                coarse: vec!["throw".into()],
                fine: vec!["throw it".into(), "throw far".into(), "toss and throw".into()],
            }],
        };
        assert_eq!(
            enc.coarse_embedding(&bank, 0).unwrap().vector,
            enc.encode("throw").unwrap().vector
        );
        assert_eq!(
            enc.fine_embedding(&bank, 0, 1).unwrap(),
            enc.fine_embedding(&bank, 0, 4).unwrap()
        );
        assert!(matches!(enc.coarse_embedding(&bank, 1).unwrap_err(), Error::Index(_)));
    }

    #[test]
    fn coarse_embedding_is_unit_and_order_invariant() {
        let enc = toy();
        let names: Vec<String> = (0..6).map(crate::dataset::class_name).collect();
        let bank = build_text_bank(&names).unwrap();
        for k in 0..6 {
            let e = enc.coarse_embedding(&bank, k).unwrap().vector;
            assert!((dot(&e, &e).sqrt() - 1.0).abs() < 1e-6);
            let mut rev = bank.clone();
            rev.classes[k].coarse.reverse();
            let r = enc.coarse_embedding(&rev, k).unwrap().vector;
            for (x, y) in e.iter().zip(&r) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn external_table_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        let rows = vec![("hello world".to_string(), (0..8).map(|i| i as f64 + 1.0).collect())];
        save_embedding_table(&path, 8, &rows).unwrap();
        let (dim, table) = load_embedding_table(&path).unwrap();
        assert_eq!(dim, 8);
        let cfg = TextEncoderConfig {
            embed_dim: 8,
            kind: EncoderKind::External,
            seed: 0,
        };
        let enc = TextEncoder::external(cfg, table).unwrap();
        let e = enc.encode("hello world").unwrap();
        assert!((dot(&e.vector, &e.vector) - 1.0).abs() < 1e-12);
        assert!(enc.encode("missing").is_err());
    }
}
