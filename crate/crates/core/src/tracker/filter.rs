use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub position: Point,
    pub velocity: Point,
    pub weight: f64,
}

/// Axis-aligned walls particles are reflected at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub min: Point,
    pub max: Point,
}

impl Area {
    pub fn contains(&self, p: Point) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }
}

fn reflect(x: f64, v: f64, lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span <= 0.0 {
        return (lo, 0.0);
    }
    // Unfold onto a period of 2·span, then fold back.
    let u = (x - lo).rem_euclid(2.0 * span);
    if u <= span {
        (lo + u, v)
    } else {
        (lo + 2.0 * span - u, -v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionNoise {
    /// Position noise per step (m).
    pub sigma_pos: f64,
    /// Velocity noise per step (m/s).
    pub sigma_vel: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        MotionNoise {
            sigma_pos: 0.2,
            sigma_vel: 0.1,
        }
    }
}

fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        sigma * rng.sample::<f64, _>(StandardNormal)
    }
}

/// `n` particles spread around `origin` with velocity `v0` and equal weights.
pub fn pf_init<R: Rng>(
    n: usize,
    origin: Point,
    v0: Point,
    spread: f64,
    rng: &mut R,
) -> Result<Vec<Particle>> {
    if n == 0 {
        return Err(Error::EmptyParticles);
    }
    if !(spread >= 0.0) {
        return Err(Error::arg("spread must be non-negative"));
    }
    Ok((0..n)
        .map(|_| Particle {
            position: Point::new(origin.x + gauss(rng, spread), origin.y + gauss(rng, spread)),
            velocity: v0,
            weight: 1.0 / n as f64,
        })
        .collect())
}

/// Constant-velocity step with Gaussian jitter, reflected at the walls.
pub fn pf_predict<R: Rng>(
    particles: &mut [Particle],
    dt: f64,
    noise: MotionNoise,
    area: Area,
    rng: &mut R,
) {
    for p in particles.iter_mut() {
        let x = p.position.x + p.velocity.x * dt + gauss(rng, noise.sigma_pos);
        let y = p.position.y + p.velocity.y * dt + gauss(rng, noise.sigma_pos);
        let vx = p.velocity.x + gauss(rng, noise.sigma_vel);
        let vy = p.velocity.y + gauss(rng, noise.sigma_vel);
        let (x, vx) = reflect(x, vx, area.min.x, area.max.x);
        let (y, vy) = reflect(y, vy, area.min.y, area.max.y);
        p.position = Point::new(x, y);
        p.velocity = Point::new(vx, vy);
    }
}

/// Sets each weight to `exp(log_likelihood)` relative to the best particle
/// and normalises. Returns `false` when no particle has a finite likelihood,
/// leaving the weights untouched.
pub fn pf_weight<F>(particles: &mut [Particle], exec: Execution, log_likelihood: F) -> bool
where
    F: Fn(&Particle) -> f64 + Sync,
{
    let logs = par::map(exec, particles, |p| log_likelihood(p));
    let best = logs
        .iter()
        .copied()
        .filter(|l| l.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return false;
    }
    let mut total = 0.0;
    for (p, l) in particles.iter_mut().zip(&logs) {
        p.weight = if l.is_finite() { (l - best).exp() } else { 0.0 };
        total += p.weight;
    }
    for p in particles.iter_mut() {
        p.weight /= total;
    }
    true
}

fn check_normalized(particles: &[Particle]) -> Result<()> {
    if particles.is_empty() {
        return Err(Error::EmptyParticles);
    }
    let sum: f64 = particles.iter().map(|p| p.weight).sum();
    if !sum.is_finite() || (sum - 1.0).abs() > 1e-6 || particles.iter().any(|p| !(p.weight >= 0.0))
    {
        return Err(Error::Unnormalized(sum));
    }
    Ok(())
}

/// Multinomial resampling: `N` independent categorical draws, weights reset
/// to `1/N`.
pub fn pf_resample<R: Rng>(particles: &[Particle], rng: &mut R) -> Result<Vec<Particle>> {
    check_normalized(particles)?;
    let n = particles.len();
    let index = WeightedIndex::new(particles.iter().map(|p| p.weight))
        .map_err(|_| Error::Unnormalized(f64::NAN))?;
    Ok((0..n)
        .map(|_| Particle {
            weight: 1.0 / n as f64,
            ..particles[index.sample(rng)]
        })
        .collect())
}

/// Weighted mean position.
pub fn pf_estimate(particles: &[Particle]) -> Result<Point> {
    check_normalized(particles)?;
    Ok(particles
        .iter()
        .fold(Point::ORIGIN, |acc, p| acc + p.position * p.weight))
}

/// Equal-weight particles drawn uniformly from `cells`, each given as its
/// bounds. Velocities are reset to zero.
pub fn pf_reseed<R: Rng>(n: usize, cells: &[Area], rng: &mut R) -> Result<Vec<Particle>> {
    if n == 0 || cells.is_empty() {
        return Err(Error::EmptyParticles);
    }
    Ok((0..n)
        .map(|_| {
            let c = cells[rng.random_range(0..cells.len())];
            Particle {
                position: Point::new(
                    rng.random_range(c.min.x..=c.max.x),
                    rng.random_range(c.min.y..=c.max.y),
                ),
                velocity: Point::ORIGIN,
                weight: 1.0 / n as f64,
            }
        })
        .collect())
}
