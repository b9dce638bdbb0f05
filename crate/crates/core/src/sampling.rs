//! Index samplers for positive pairs: frame pairs within a tracklet, fragment
//! pairs from the two halves of a tracklet, and cross-tracklet fragment pairs
//! on a schedule. All indices are 1-based.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Tracklet;

const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub sigma: f64,
    pub fragment_len: usize,
    pub strides: Vec<usize>,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub alpha_horizon: f64,
    /// Use `1 - alpha` as the cross-tracklet probability.
    pub invert_alpha: bool,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            sigma: 30.0,
            fragment_len: 8,
            strides: vec![1, 2, 3, 4],
            alpha_start: 1.0,
            alpha_end: 0.5,
            alpha_horizon: 0.75,
            invert_alpha: false,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if self.fragment_len == 0 {
            return bad("fragment_len must be at least 1");
        }
        if self.strides.is_empty() || self.strides.contains(&0) {
            return bad("strides must be non-empty and positive");
        }
        if !(0.0 <= self.alpha_end && self.alpha_end <= self.alpha_start && self.alpha_start <= 1.0)
        {
            return bad("need 0 <= alpha_end <= alpha_start <= 1");
        }
        if !(self.alpha_horizon > 0.0 && self.alpha_horizon <= 1.0) {
            return bad("alpha_horizon must be in (0, 1]");
        }
        Ok(())
    }

    /// Generator seeded from `seed`.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Two frame indices of one tracklet of length `l`: `i` uniform, `j` from a
/// rounded Gaussian around `i`, redrawn while out of range or equal to `i`.
pub fn sample_frame_pair<R: Rng + ?Sized>(
    l: usize,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<(usize, usize)> {
    if l < 2 {
        return Err(Error::Data(format!(
            "frame pair needs a tracklet of length >= 2, got {l}"
        )));
    }
    let normal = Normal::new(0.0, cfg.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let i = rng.random_range(1..=l);
    let mut draw = i as f64;
    for _ in 0..MAX_ATTEMPTS {
        draw = i as f64 + normal.sample(rng);
        let j = draw.round();
        if j >= 1.0 && j <= l as f64 && j as usize != i {
            return Ok((i, j as usize));
        }
    }
    let mut j = draw.round().clamp(1.0, l as f64) as usize;
    if j == i {
        j = if (draw >= i as f64 && i < l) || i == 1 {
            i + 1
        } else {
            i - 1
        };
    }
    Ok((i, j))
}

/// `fragment_len` indices from `start` with a random stride; shrinks the
/// stride when the fragment would run past `n`, and pads with the last index
/// when even the smallest stride does not fit.
fn fragment<R: Rng + ?Sized>(
    start: usize,
    n: usize,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Vec<usize> {
    let len = cfg.fragment_len;
    let fits = |s: usize| start + (len - 1) * s <= n;
    let drawn = *cfg
        .strides
        .choose(rng)
        .expect("strides validated non-empty");
    let stride = if fits(drawn) {
        drawn
    } else {
        cfg.strides
            .iter()
            .copied()
            .filter(|&s| fits(s))
            .max()
            .unwrap_or_else(|| *cfg.strides.iter().min().expect("non-empty"))
    };
    let mut out: Vec<usize> = (0..len)
        .map(|k| start + k * stride)
        .take_while(|&x| x <= n)
        .collect();
    let last = *out.last().expect("start <= n");
    out.resize(len, last);
    out
}

/// One fragment starting in each half of a tracklet of length `n`.
pub fn sample_fragment_pair<R: Rng + ?Sized>(
    n: usize,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Data(format!(
            "fragment pair needs a tracklet of length >= 2, got {n}"
        )));
    }
    cfg.validate()?;
    let half = n / 2;
    let s1 = rng.random_range(1..=half);
    let s2 = rng.random_range(half + 1..=n);
    let f1 = fragment(s1, n, cfg, rng);
    let f2 = fragment(s2, n, cfg, rng);
    Ok((f1, f2))
}

/// Cross-tracklet probability at `step` of `total_steps`: linear from
/// `alpha_start` to `alpha_end` over the first `alpha_horizon` of training,
/// then flat.
pub fn alpha_schedule(step: usize, total_steps: usize, cfg: &SamplingConfig) -> f64 {
    let knee = cfg.alpha_horizon * total_steps.max(1) as f64;
    let t = step as f64;
    if t >= knee {
        cfg.alpha_end
    } else {
        cfg.alpha_start + (cfg.alpha_end - cfg.alpha_start) * (t / knee)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrossPair {
    /// Positions in the input tracklet list.
    pub tracklet_a: usize,
    pub tracklet_b: usize,
    pub fragment_a: Vec<usize>,
    pub fragment_b: Vec<usize>,
    pub same_tracklet: bool,
}

/// Fragment pair for one entity: from two distinct tracklets with the
/// scheduled probability, otherwise from the two halves of one tracklet.
pub fn sample_cross_tracklet_pair<R: Rng + ?Sized>(
    tracklets: &[Tracklet],
    step: usize,
    total_steps: usize,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<CrossPair> {
    let lens: Vec<usize> = tracklets.iter().map(Tracklet::len).collect();
    sample_cross_pair_by_len(&lens, step, total_steps, cfg, rng)
}

/// [`sample_cross_tracklet_pair`] over tracklet lengths only.
pub fn sample_cross_pair_by_len<R: Rng + ?Sized>(
    lens: &[usize],
    step: usize,
    total_steps: usize,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<CrossPair> {
    if lens.is_empty() {
        return Err(Error::Empty("entity tracklet list"));
    }
    if lens.contains(&0) {
        return Err(Error::Data("empty tracklet".into()));
    }
    cfg.validate()?;
    let alpha = alpha_schedule(step, total_steps, cfg);
    let p = if cfg.invert_alpha { 1.0 - alpha } else { alpha };
    let cross = lens.len() >= 2 && rng.random_bool(p.clamp(0.0, 1.0));
    if cross {
        let a = rng.random_range(0..lens.len());
        let mut b = rng.random_range(0..lens.len() - 1);
        if b >= a {
            b += 1;
        }
        let sa = rng.random_range(1..=lens[a]);
        let fa = fragment(sa, lens[a], cfg, rng);
        let sb = rng.random_range(1..=lens[b]);
        let fb = fragment(sb, lens[b], cfg, rng);
        return Ok(CrossPair {
            tracklet_a: a,
            tracklet_b: b,
            fragment_a: fa,
            fragment_b: fb,
            same_tracklet: false,
        });
    }
    let a = rng.random_range(0..lens.len());
    let (fa, fb) = if lens[a] >= 2 {
        sample_fragment_pair(lens[a], cfg, rng)?
    } else {
        (vec![1; cfg.fragment_len], vec![1; cfg.fragment_len])
    };
    Ok(CrossPair {
        tracklet_a: a,
        tracklet_b: a,
        fragment_a: fa,
        fragment_b: fb,
        same_tracklet: true,
    })
}
