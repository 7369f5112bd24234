//! Euler scheme for the stochastic system driving a CB-process: drift,
//! square-root diffusion, Poisson-sampled large jumps and a cutoff below
//! which jumps are replaced by their moments. Jumps are capped at the
//! truncation level and the path is sent to the cemetery once its mass
//! reaches that level.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant::fmt17;
use crate::error::{invalid, CbError, Result};
use crate::levy::TailServices;
use crate::mechanism::BranchingMechanism;
use crate::rng::path_stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmallJumpPolicy {
    /// Small jumps contribute only through their compensator.
    DriftOnly,
    /// Adds a centered Gaussian with the small jumps' second moments.
    GaussianCorrection,
}

impl SmallJumpPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            SmallJumpPolicy::DriftOnly => "drift",
            SmallJumpPolicy::GaussianCorrection => "gauss",
        }
    }
}

/// Which states a [`SamplePath`] keeps.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordGrid {
    EveryStep,
    /// Every `n`-th step, plus the final one.
    EveryNth(usize),
    EndOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub eps: f64,
    pub truncation_n: f64,
    pub policy: SmallJumpPolicy,
    pub master_seed: u64,
    pub record: RecordGrid,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            eps: 1e-2,
            truncation_n: 1e6,
            policy: SmallJumpPolicy::DriftOnly,
            master_seed: 0,
            record: RecordGrid::EveryStep,
        }
    }
}

/// A simulated trajectory. `None` states are the cemetery.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub times: Vec<f64>,
    pub states: Vec<Option<Vec<f64>>>,
    /// First grid time with `|ξ| ≥ truncation_n`, or `+∞`.
    pub lifetime: f64,
    /// `(level, first grid time with |ξ| ≥ level)` for levels
    /// `10, 100, …` and the truncation level.
    pub level_hits: Vec<(f64, f64)>,
}

impl SamplePath {
    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().and_then(|s| s.as_deref())
    }

    /// `t,xi_1,…,xi_m,alive`; cemetery rows carry `inf` and `alive = 0`.
    pub fn write_csv<W: Write>(&self, m: usize, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("t");
        for i in 1..=m {
            header.push_str(&format!(",xi_{i}"));
        }
        header.push_str(",alive");
        writeln!(w, "{header}")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut line = fmt17(*t);
            match s {
                Some(x) => {
                    for v in x {
                        line.push(',');
                        line.push_str(&fmt17(*v));
                    }
                    line.push_str(",1");
                }
                None => {
                    for _ in 0..m {
                        line.push_str(",inf");
                    }
                    line.push_str(",0");
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// What a path run reports besides the observed states.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub lifetime: f64,
    pub level_hits: Vec<(f64, f64)>,
}

/// Precomputed per-mechanism data for repeated path runs.
#[derive(Debug, Clone)]
pub struct PathSimulator<'a> {
    mech: &'a BranchingMechanism,
    tails: Vec<TailServices>,
    x0: Vec<f64>,
    config: SimConfig,
    steps: usize,
    dt: f64,
    horizon: f64,
    levels: Vec<f64>,
}

fn l1(x: &[f64]) -> f64 {
    x.iter().sum()
}

impl<'a> PathSimulator<'a> {
    pub fn new(
        mech: &'a BranchingMechanism,
        x0: &[f64],
        horizon: f64,
        config: &SimConfig,
    ) -> Result<Self> {
        mech.ensure_valid()?;
        if x0.len() != mech.m {
            return Err(invalid(format!(
                "x0 has {} components, mechanism {}",
                x0.len(),
                mech.m
            )));
        }
        if x0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("x0 must be finite and componentwise nonnegative"));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon must be finite and nonnegative"));
        }
        if !(config.dt > 0.0 && config.dt.is_finite()) {
            return Err(invalid("dt must be positive"));
        }
        if !(config.eps > 0.0 && config.eps <= 1.0) {
            return Err(invalid("eps must lie in (0, 1]"));
        }
        if !(config.truncation_n > l1(x0) && config.truncation_n.is_finite()) {
            return Err(invalid("truncation level must exceed the initial mass"));
        }
        if let RecordGrid::EveryNth(0) = config.record {
            return Err(invalid("record stride must be positive"));
        }
        let tails = mech.tail_services(config.eps)?;
        for t in &tails {
            if !t.tail_mass.is_finite() {
                return Err(invalid("infinite tail mass at the chosen cutoff"));
            }
        }
        let steps = if horizon == 0.0 {
            0
        } else {
            ((horizon / config.dt) - 1e-9).ceil().max(1.0) as usize
        };
        let dt = if steps == 0 {
            0.0
        } else {
            horizon / steps as f64
        };
        let mut levels = Vec::new();
        let mut level = 10.0;
        while level < config.truncation_n {
            levels.push(level);
            level *= 10.0;
        }
        levels.push(config.truncation_n);
        Ok(Self {
            mech,
            tails,
            x0: x0.to_vec(),
            config: config.clone(),
            steps,
            dt,
            horizon,
            levels,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Effective step, `T / ⌈T/dt⌉`.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time_of(&self, step: usize) -> f64 {
        if step == self.steps {
            self.horizon
        } else {
            step as f64 * self.dt
        }
    }

    /// Runs path `index`, calling `observe(step, t, state)` at `t = 0` and
    /// after every step; `state` is `None` from the lifetime on.
    pub fn run<O>(&self, index: u64, mut observe: O) -> Result<PathOutcome>
    where
        O: FnMut(usize, f64, Option<&[f64]>),
    {
        let m = self.mech.m;
        let mut rng = path_stream(self.config.master_seed, index);
        let mut x = self.x0.clone();
        let mut next = vec![0.0; m];
        let mut hits: Vec<(f64, f64)> = Vec::new();
        observe(0, 0.0, Some(&x));
        let mut lifetime = f64::INFINITY;
        let sqrt_dt = self.dt.sqrt();
        let cap = self.config.truncation_n;
        let mut cov = vec![vec![0.0; m]; m];
        for step in 1..=self.steps {
            let t = self.time_of(step);
            if lifetime.is_finite() {
                observe(step, t, None);
                continue;
            }
            // Drift from the pre-step state.
            for k in 0..m {
                let mut d = 0.0;
                for i in 0..m {
                    if x[i] == 0.0 {
                        continue;
                    }
                    d += self.mech.rows[i].alpha[k] * x[i];
                    if i == k {
                        d -= x[i] * self.tails[i].compensator[k];
                    } else {
                        d += x[i] * self.tails[i].small_first_moment[k];
                    }
                }
                next[k] = x[k] + self.dt * d;
            }
            // Square-root diffusion.
            for k in 0..m {
                let beta = self.mech.rows[k].beta;
                if beta > 0.0 && x[k] > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    next[k] += (beta * x[k]).sqrt() * sqrt_dt * z;
                }
            }
            // Small-jump Gaussian correction.
            if self.config.policy == SmallJumpPolicy::GaussianCorrection {
                self.add_gaussian_correction(&x, &mut cov, &mut next, &mut rng);
            }
            for v in next.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            // Jumps above the cutoff, at pre-step rates.
            for i in 0..m {
                let rate = self.dt * x[i] * self.tails[i].tail_mass;
                if rate <= 0.0 {
                    continue;
                }
                let count = Poisson::new(rate)
                    .map_err(|e| CbError::InvalidArgument(format!("jump rate {rate}: {e}")))?
                    .sample(&mut rng) as u64;
                for _ in 0..count {
                    self.tails[i].add_jump(&mut rng, cap, &mut next)?;
                }
            }
            std::mem::swap(&mut x, &mut next);
            let mass = l1(&x);
            for &level in &self.levels[hits.len()..] {
                if mass >= level {
                    hits.push((level, t));
                } else {
                    break;
                }
            }
            if mass >= cap || !mass.is_finite() {
                lifetime = t;
                observe(step, t, None);
            } else {
                observe(step, t, Some(&x));
            }
        }
        Ok(PathOutcome {
            lifetime,
            level_hits: hits,
        })
    }

    fn add_gaussian_correction(
        &self,
        x: &[f64],
        cov: &mut [Vec<f64>],
        next: &mut [f64],
        rng: &mut ChaCha8Rng,
    ) {
        let m = x.len();
        let mut any = false;
        for row in cov.iter_mut() {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let mom = &self.tails[i].small_second_moment;
            for k in 0..m {
                for l in 0..m {
                    if mom[k][l] != 0.0 {
                        cov[k][l] += self.dt * xi * mom[k][l];
                        any = true;
                    }
                }
            }
        }
        if !any {
            return;
        }
        let chol = psd_cholesky(cov);
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for k in 0..m {
            next[k] += (0..=k).map(|l| chol[k][l] * z[l]).sum::<f64>();
        }
    }

    /// Runs path `index` and records it according to the configured grid.
    pub fn path(&self, index: u64) -> Result<SamplePath> {
        let stride = match self.config.record {
            RecordGrid::EveryStep => 1,
            RecordGrid::EveryNth(n) => n,
            RecordGrid::EndOnly => usize::MAX,
        };
        let last = self.steps;
        let mut times = Vec::new();
        let mut states = Vec::new();
        let outcome = self.run(index, |step, t, s| {
            if step == 0 || step == last || step % stride == 0 {
                if step == 0 && last != 0 && stride == usize::MAX {
                    return;
                }
                times.push(t);
                states.push(s.map(|v| v.to_vec()));
            }
        })?;
        Ok(SamplePath {
            times,
            states,
            lifetime: outcome.lifetime,
            level_hits: outcome.level_hits,
        })
    }
}

/// Lower-triangular `L` with `L Lᵀ = A` for symmetric positive semidefinite
/// `A`; nonpositive pivots zero their column.
fn psd_cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d <= 0.0 {
            continue;
        }
        let s = d.sqrt();
        l[j][j] = s;
        for i in j + 1..n {
            let v = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = v / s;
        }
    }
    l
}

/// One path with index `path_index`.
pub fn simulate_path(
    mech: &BranchingMechanism,
    x0: &[f64],
    horizon: f64,
    config: &SimConfig,
    path_index: u64,
) -> Result<SamplePath> {
    PathSimulator::new(mech, x0, horizon, config)?.path(path_index)
}

/// Paths `0..n`, generated in parallel and returned in index order.
pub fn simulate_ensemble(
    mech: &BranchingMechanism,
    x0: &[f64],
    horizon: f64,
    config: &SimConfig,
    n: usize,
) -> Result<Vec<SamplePath>> {
    let sim = PathSimulator::new(mech, x0, horizon, config)?;
    map_paths(n, |i| sim.path(i))
}

/// Applies `f` to path indices `0..n` in parallel; results keep index order.
pub fn map_paths<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if n == 0 {
        return Err(invalid("path count must be at least 1"));
    }
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Folds per-path values in path-index order, independent of scheduling.
pub fn fold_ensemble<T, A, F, G>(n: usize, init: A, per_path: F, mut fold: G) -> Result<A>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
    G: FnMut(A, T) -> A,
{
    let values = map_paths(n, per_path)?;
    Ok(values.into_iter().fold(init, &mut fold))
}

/// Ensemble summary at the horizon.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub paths: usize,
    pub dt: f64,
    pub eps: f64,
    pub truncation_n: f64,
    pub seed: u64,
    pub policy: &'static str,
    pub horizon: f64,
    pub survival_fraction: f64,
    /// Mean of `ξ(T)` over surviving paths, per coordinate.
    pub mean_surviving: Vec<f64>,
    /// Mean lifetime over exploded paths, if any.
    pub mean_lifetime_exploded: Option<f64>,
}

pub fn summarize(
    paths: &[SamplePath],
    m: usize,
    horizon: f64,
    config: &SimConfig,
    effective_dt: f64,
) -> EnsembleSummary {
    let mut alive = 0usize;
    let mut sums = vec![0.0; m];
    let mut lifetimes = Vec::new();
    for p in paths {
        match p.final_state() {
            Some(x) => {
                alive += 1;
                for (s, v) in sums.iter_mut().zip(x) {
                    *s += v;
                }
            }
            None => lifetimes.push(p.lifetime),
        }
    }
    EnsembleSummary {
        paths: paths.len(),
        dt: effective_dt,
        eps: config.eps,
        truncation_n: config.truncation_n,
        seed: config.master_seed,
        policy: config.policy.as_str(),
        horizon,
        survival_fraction: alive as f64 / paths.len().max(1) as f64,
        mean_surviving: sums
            .iter()
            .map(|s| {
                if alive > 0 {
                    s / alive as f64
                } else {
                    f64::NAN
                }
            })
            .collect(),
        mean_lifetime_exploded: if lifetimes.is_empty() {
            None
        } else {
            Some(lifetimes.iter().sum::<f64>() / lifetimes.len() as f64)
        },
    }
}
