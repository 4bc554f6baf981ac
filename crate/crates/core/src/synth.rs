//! Synthetic problems with known structure, for experiments and fixtures.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::corpus::{Features, Instance, SourceCorpus, TargetCorpus};
use crate::error::{Error, Result};
use crate::game::SourceId;
use crate::oracle::TabularGame;

/// How a noisy source corrupts its labels. `flip_rate` is always the
/// expected fraction of flipped labels over the whole source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipNoise {
    /// A flipped label becomes a uniformly chosen other class.
    Uniform,
    /// A flipped label becomes the next class, cyclically.
    Cyclic,
    /// Only classes `a` and `b` are flipped, into each other; their
    /// per-instance flip probability is scaled so the source-wide rate
    /// stays at `flip_rate`.
    Swap(usize, usize),
}

/// A bag-of-words classification task split across several sources.
///
/// Each class owns a block of indicative words; a document mixes words from
/// its class block with words shared by all classes. Every source also has a
/// few domain words of its own and, with probability `domain_signal` per
/// token, uses a class block specific to its domain. Target documents use
/// the domain class block of `target_domain` when one is set. Sources listed
/// in `noisy_sources` have a fraction `flip_rate` of their labels replaced by
/// a different class.
#[derive(Debug, Clone)]
pub struct TextTaskSpec {
    pub classes: usize,
    pub sources: usize,
    pub per_source: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub doc_len: usize,
    /// Probability that a token comes from the document's class block.
    pub signal: f64,
    pub class_vocab: usize,
    pub shared_vocab: usize,
    pub domain_signal: f64,
    pub target_domain: Option<usize>,
    pub noisy_sources: Vec<usize>,
    pub flip_rate: f64,
    pub noise: FlipNoise,
    pub seed: u64,
}

impl Default for TextTaskSpec {
    fn default() -> Self {
        TextTaskSpec {
            classes: 3,
            sources: 6,
            per_source: 500,
            dev_size: 300,
            test_size: 600,
            doc_len: 6,
            signal: 0.35,
            class_vocab: 20,
            shared_vocab: 60,
            domain_signal: 0.0,
            target_domain: None,
            noisy_sources: vec![],
            flip_rate: 0.5,
            noise: FlipNoise::Cyclic,
            seed: 0,
        }
    }
}

pub struct TextTask {
    pub sources: Vec<SourceCorpus>,
    pub dev: TargetCorpus,
    pub test: TargetCorpus,
    pub labels: Vec<String>,
}

impl TextTaskSpec {
    pub fn generate(&self) -> Result<TextTask> {
        if self.classes < 2 || self.classes > 10 || self.sources == 0 || self.per_source == 0 {
            return Err(Error::invalid("text task needs 2..=10 classes and non-empty sources"));
        }
        if self
            .noisy_sources
            .iter()
            .chain(&self.target_domain)
            .any(|&s| s >= self.sources)
        {
            return Err(Error::invalid("source index out of range"));
        }
        if self.signal < 0.0 || self.domain_signal < 0.0 || self.signal + self.domain_signal > 0.9 {
            return Err(Error::invalid("signal + domain_signal must lie in [0, 0.9]"));
        }
        let swap_rate = match self.noise {
            FlipNoise::Swap(a, b) => {
                let r = self.flip_rate * self.classes as f64 / 2.0;
                if a == b || a >= self.classes || b >= self.classes || r > 1.0 {
                    return Err(Error::invalid(
                        "swap noise needs two distinct classes and flip_rate <= 2/classes",
                    ));
                }
                r
            }
            _ => self.flip_rate,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // `neutral` adds the label-free domain words only sources carry
        let doc = |rng: &mut ChaCha8Rng, label: usize, domain: Option<usize>, neutral: bool| -> Vec<String> {
            let class_hi = self.signal;
            let domain_hi = class_hi + if domain.is_some() { self.domain_signal } else { 0.0 };
            (0..self.doc_len)
                .map(|_| {
                    let u: f64 = rng.gen();
                    if u < class_hi {
                        format!("c{label}w{}", rng.gen_range(0..self.class_vocab))
                    } else if u < domain_hi {
                        format!("c{label}d{}w{}", domain.unwrap(), rng.gen_range(0..self.class_vocab))
                    } else if neutral && u < domain_hi + 0.1 {
                        format!("d{}w{}", domain.unwrap(), rng.gen_range(0..5))
                    } else {
                        format!("s{}", rng.gen_range(0..self.shared_vocab))
                    }
                })
                .collect()
        };
        let mut sources = Vec::with_capacity(self.sources);
        for s in 0..self.sources {
            let noisy = self.noisy_sources.contains(&s);
            let instances = (0..self.per_source)
                .map(|_| {
                    let label = rng.gen_range(0..self.classes);
                    let tokens = doc(&mut rng, label, Some(s), true);
                    let coin: f64 = rng.gen();
                    let other = rng.gen_range(1..self.classes);
                    let shown = match self.noise {
                        _ if !noisy => label,
                        FlipNoise::Uniform if coin < self.flip_rate => (label + other) % self.classes,
                        FlipNoise::Cyclic if coin < self.flip_rate => (label + 1) % self.classes,
                        FlipNoise::Swap(a, b) if coin < swap_rate && label == a => b,
                        FlipNoise::Swap(a, b) if coin < swap_rate && label == b => a,
                        _ => label,
                    };
                    Instance {
                        features: Features::Text(tokens),
                        label: shown,
                    }
                })
                .collect();
            sources.push(SourceCorpus::new(
                SourceId {
                    index: s,
                    name: format!("src{s}"),
                },
                instances,
            )?);
        }
        let mut target = |name: &str, n: usize| {
            let instances = (0..n)
                .map(|_| {
                    let label = rng.gen_range(0..self.classes);
                    Instance {
                        features: Features::Text(doc(&mut rng, label, self.target_domain, false)),
                        label,
                    }
                })
                .collect();
            TargetCorpus::new(name, instances)
        };
        let dev = target("dev", self.dev_size)?;
        let test = target("test", self.test_size)?;
        Ok(TextTask {
            sources,
            dev,
            test,
            labels: (0..self.classes).map(|c| format!("c{c}")).collect(),
        })
    }
}

/// Writes instances as JSONL using `labels` to name label ids.
pub fn write_jsonl(path: &Path, instances: &[Instance], labels: &[String]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for inst in instances {
        let label = &labels[inst.label];
        let line = match &inst.features {
            Features::Text(t) => json!({"text": t.join(" "), "label": label}),
            Features::Dense(v) => json!({"vec": v, "label": label}),
        };
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

/// v(S) = 1 - exp(-Σ_{i∈S} w_i): every source helps, with diminishing
/// returns once the coalition is strong.
pub fn diminishing_returns_game(weights: &[f64]) -> Result<TabularGame> {
    TabularGame::from_fn(weights.len(), 1, |s| {
        vec![1.0 - (-s.iter().map(|i| weights[i]).sum::<f64>()).exp()]
    })?
    .with_range(0.0, 1.0)
}

/// A diminishing-returns game with weights drawn from `[0.05, 1)`, plus a
/// per-subset perturbation of at most `noise`.
pub fn random_game(m: usize, noise: f64, seed: u64) -> Result<TabularGame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
    TabularGame::from_fn(m, 1, |s| {
        let base = if s.is_empty() {
            0.0
        } else {
            1.0 - (-s.iter().map(|i| weights[i]).sum::<f64>()).exp()
        };
        let jitter = if s.is_empty() {
            0.0
        } else {
            rng.gen_range(-noise..=noise)
        };
        vec![base + jitter]
    })
}
