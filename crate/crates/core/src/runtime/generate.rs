use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use super::preamble::{FileStrategy, GeneratorSpec, Preamble};

/// Stream used for payload generation; branch selection uses stream 0.
pub const GENERATOR_STREAM: u64 = 1;
pub const CHOICE_STREAM: u64 = 0;

/// Seeded ChaCha8 stream. Every run derives its streams from the run seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerateError {
    #[error("value source `{0}` is empty")]
    FileSourceExhausted(PathBuf),
    #[error("value source `{0}` was not loaded")]
    MissingSource(PathBuf),
    #[error("generator needs an API key but the preamble declares no `auth`")]
    NoAuthKey,
}

const ALPHANUMERIC: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

/// Per-run generator state: the random stream and `fromFile` cursors.
pub struct Generator<'p> {
    rng: ChaCha8Rng,
    cursors: BTreeMap<PathBuf, usize>,
    preamble: &'p Preamble,
    auth: Option<String>,
}

impl<'p> Generator<'p> {
    pub fn new(preamble: &'p Preamble, seed: u64) -> Self {
        Generator {
            rng: seeded_rng(seed, GENERATOR_STREAM),
            cursors: BTreeMap::new(),
            preamble,
            auth: preamble.auth_value(),
        }
    }

    pub fn generate(&mut self, spec: &GeneratorSpec) -> Result<Value, GenerateError> {
        Ok(match spec {
            GeneratorSpec::Const { value } => value.clone(),
            GeneratorSpec::Uuid => {
                let mut bytes = [0u8; 16];
                self.rng.fill_bytes(&mut bytes);
                bytes[6] = (bytes[6] & 0x0f) | 0x40;
                bytes[8] = (bytes[8] & 0x3f) | 0x80;
                let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
                Value::String(format!(
                    "{}-{}-{}-{}-{}",
                    &hex[0..8],
                    &hex[8..12],
                    &hex[12..16],
                    &hex[16..20],
                    &hex[20..32]
                ))
            }
            GeneratorSpec::RandString { len } => Value::String(
                (0..*len)
                    .map(|_| ALPHANUMERIC[self.rng.random_range(0..ALPHANUMERIC.len())] as char)
                    .collect(),
            ),
            GeneratorSpec::RandInt { lo, hi } => Value::from(self.rng.random_range(*lo..=*hi)),
            GeneratorSpec::OneOf { values } => values[self.rng.random_range(0..values.len())].clone(),
            GeneratorSpec::Object { fields } => {
                let mut out = Map::new();
                for (name, field) in fields {
                    out.insert(name.clone(), self.generate(field)?);
                }
                Value::Object(out)
            }
            GeneratorSpec::FromFile { path, strategy } => {
                let values = self
                    .preamble
                    .files
                    .get(path)
                    .ok_or_else(|| GenerateError::MissingSource(path.clone()))?;
                if values.is_empty() {
                    return Err(GenerateError::FileSourceExhausted(path.clone()));
                }
                let i = match strategy {
                    FileStrategy::Cycle => {
                        let cursor = self.cursors.entry(path.clone()).or_insert(0);
                        let i = *cursor % values.len();
                        *cursor += 1;
                        i
                    }
                    FileStrategy::Random => self.rng.random_range(0..values.len()),
                };
                values[i].clone()
            }
            GeneratorSpec::AuthKey => Value::String(self.auth.clone().ok_or(GenerateError::NoAuthKey)?),
        })
    }
}
