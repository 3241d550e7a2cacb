//! Offline transition datasets: generation, region clipping and the UWDS
//! binary file format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::behavior::{behavior_policy, random_policy, rollout, PdGains};
use crate::env::lander::{EnvConfig, Lander, LanderAction, LanderState, ACTION_DIM, STATE_DIM, X_BOUND, Y_MAX};
use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::rng::sub_rng;

pub const MAGIC: &[u8; 4] = b"UWDS";
/// `major << 16 | minor`.
pub const VERSION: u32 = (1 << 16) | 1;
const RECORD_BYTES: usize = 8 * (2 * STATE_DIM + ACTION_DIM + 1) + 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub s: LanderState,
    pub a: LanderAction,
    pub r: f64,
    pub next: LanderState,
    pub done: bool,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.s.to_array().iter().chain(self.next.to_array().iter()).all(|v| v.is_finite())
            && self.a.thrust.iter().all(|v| v.is_finite())
            && self.r.is_finite()
    }
}

/// Which policy produced the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Behavior {
    Expert { gains: PdGains, noise_std: f64 },
    Random,
}

impl Behavior {
    pub fn expert() -> Self {
        Behavior::Expert {
            gains: PdGains::default(),
            noise_std: 0.05,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Behavior::Expert { .. } => "pd-expert",
            Behavior::Random => "random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keep {
    Below,
    Above,
}

/// One region filter. Both predicates are inclusive of the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub axis: Axis,
    pub threshold: f64,
    pub keep: Keep,
}

impl ClipSpec {
    pub fn new(axis: Axis, threshold: f64, keep: Keep) -> Self {
        Self { axis, threshold, keep }
    }

    pub fn keeps(&self, s: &LanderState) -> bool {
        let v = match self.axis {
            Axis::X => s.x,
            Axis::Y => s.y,
        };
        match self.keep {
            Keep::Below => v <= self.threshold,
            Keep::Above => v >= self.threshold,
        }
    }

    pub fn describe(&self) -> String {
        let axis = match self.axis {
            Axis::X => "x",
            Axis::Y => "y",
        };
        let op = match self.keep {
            Keep::Below => "<=",
            Keep::Above => ">=",
        };
        format!("keep {axis} {op} {}", self.threshold)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: u64,
    pub episodes: usize,
    pub behavior: Behavior,
    pub env: EnvConfig,
    /// Absent in files written before format 1.1.
    #[serde(default)]
    pub clips: Vec<ClipSpec>,
}

impl DatasetMeta {
    pub fn clip_description(&self) -> String {
        if self.clips.is_empty() {
            "none".into()
        } else {
            self.clips.iter().map(ClipSpec::describe).collect::<Vec<_>>().join("; ")
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub transitions: Vec<Transition>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn states(&self) -> Matrix {
        self.matrix(|t| t.s.to_array().to_vec(), STATE_DIM)
    }

    pub fn actions(&self) -> Matrix {
        self.matrix(|t| t.a.thrust.to_vec(), ACTION_DIM)
    }

    fn matrix(&self, f: impl Fn(&Transition) -> Vec<f64>, cols: usize) -> Matrix {
        let data: Vec<f64> = self.transitions.iter().flat_map(f).collect();
        Matrix::from_vec(self.len(), cols, data).expect("row width fixed")
    }

    /// Encodes to UWDS bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::with_capacity(28 + meta.len() + self.len() * RECORD_BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(STATE_DIM as u32).to_le_bytes());
        out.extend_from_slice(&(ACTION_DIM as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for t in &self.transitions {
            let values = t
                .s
                .to_array()
                .into_iter()
                .chain(t.a.thrust)
                .chain([t.r])
                .chain(t.next.to_array());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.push(t.done as u8);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(0, format!("bad magic {magic:?}")));
        }
        let version = r.u32("version")?;
        if version >> 16 != VERSION >> 16 || (version & 0xffff) > (VERSION & 0xffff) {
            return Err(Error::format(4, format!("unsupported version {}.{}", version >> 16, version & 0xffff)));
        }
        let sd = r.u32("state-dim")?;
        if sd as usize != STATE_DIM {
            return Err(Error::format(8, format!("state-dim {sd}, expected {STATE_DIM}")));
        }
        let ad = r.u32("action-dim")?;
        if ad as usize != ACTION_DIM {
            return Err(Error::format(12, format!("action-dim {ad}, expected {ACTION_DIM}")));
        }
        let count = r.u64("count")?;
        let meta_len = r.u32("metadata length")? as usize;
        let meta_at = r.pos;
        let meta_bytes = r.take(meta_len, "metadata")?;
        let meta: DatasetMeta = serde_json::from_slice(meta_bytes)
            .map_err(|e| Error::format(meta_at as u64, format!("metadata: {e}")))?;
        let need = (count as usize).checked_mul(RECORD_BYTES);
        if need.map_or(true, |n| n > bytes.len() - r.pos) {
            let have = (bytes.len() - r.pos) / RECORD_BYTES;
            return Err(Error::format(
                (r.pos + have * RECORD_BYTES) as u64,
                format!("truncated: {count} records declared, {have} complete"),
            ));
        }
        let mut transitions = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let mut v = [0.0; 2 * STATE_DIM + ACTION_DIM + 1];
            for slot in v.iter_mut() {
                *slot = r.f64("record")?;
            }
            let at = r.pos;
            let done = match r.take(1, "done flag")?[0] {
                0 => false,
                1 => true,
                b => return Err(Error::format(at as u64, format!("done flag {b}"))),
            };
            transitions.push(Transition {
                s: LanderState::from_slice(&v[0..4]),
                a: LanderAction { thrust: [v[4], v[5]] },
                r: v[6],
                next: LanderState::from_slice(&v[7..11]),
                done,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos as u64, "trailing bytes"));
        }
        Ok(Dataset { transitions, meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.pos as u64, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Rolls out `episodes` episodes; episode `i` uses `sub_rng(seed, i)`.
pub fn generate_dataset(env: &EnvConfig, behavior: &Behavior, episodes: usize, seed: u64) -> Result<Dataset> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be >= 1".into()));
    }
    if let Behavior::Expert { noise_std, .. } = behavior {
        if !(*noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::Config(format!("behavior noise_std must be >= 0, got {noise_std}")));
        }
    }
    let lander = Lander::new(env.clone())?;
    let mut transitions = Vec::new();
    for ep in 0..episodes {
        let mut rng = sub_rng(seed, ep as u64);
        let start = lander.reset(&mut rng);
        let record = |s: &LanderState, a: &LanderAction, r: f64, n: &LanderState, done: bool| {
            transitions.push(Transition {
                s: *s,
                a: *a,
                r,
                next: *n,
                done,
            })
        };
        match behavior {
            Behavior::Expert { gains, noise_std } => {
                rollout(&lander, start, |s, r| behavior_policy(s, *gains, *noise_std, env, r), &mut rng, record)?;
            }
            Behavior::Random => {
                rollout(&lander, start, |_, r| random_policy(r), &mut rng, record)?;
            }
        }
    }
    Ok(Dataset {
        transitions,
        meta: DatasetMeta {
            generator: behavior.name().into(),
            seed,
            episodes,
            behavior: behavior.clone(),
            env: env.clone(),
            clips: Vec::new(),
        },
    })
}

/// Keeps transitions whose start state passes `clip`. Applying the same clip
/// twice is a no-op, metadata included.
pub fn clip_dataset(d: &Dataset, clip: ClipSpec) -> Result<Dataset> {
    let bound = match clip.axis {
        Axis::X => -X_BOUND..=X_BOUND,
        Axis::Y => 0.0..=Y_MAX,
    };
    if !bound.contains(&clip.threshold) {
        return Err(Error::Config(format!(
            "clip threshold {} outside state bounds {:?}",
            clip.threshold, bound
        )));
    }
    let transitions: Vec<Transition> = d.transitions.iter().filter(|t| clip.keeps(&t.s)).copied().collect();
    if transitions.is_empty() {
        return Err(Error::contract(format!("clip '{}' removes every transition", clip.describe())));
    }
    let mut meta = d.meta.clone();
    if !meta.clips.contains(&clip) {
        meta.clips.push(clip);
    }
    Ok(Dataset { transitions, meta })
}
