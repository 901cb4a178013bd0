//! Ray-cast latency workload: one tick of all three rings, sensing plus
//! self-occlusion masking, in the default cell with the human nearby.

use std::time::Instant;

use nalgebra::Isometry3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::Result;
use crate::scene::{advance_avatar, Scene};
use crate::tof::{measure_ring, ToFRing, SENSORS_PER_RING};

/// Perimeter rays per sensor that make 3 x 8 x 25 = 600 sensing rays.
pub const BUDGET_CONE_RAYS: usize = 24;

pub struct Workload {
    pub scene: Scene,
    pub rings: [ToFRing; 3],
    pub poses: [Isometry3<f64>; 3],
}

impl Workload {
    /// The arm halfway through its sweep, the human at the start of its path.
    pub fn new(config: &Config) -> Result<Self> {
        let mut cfg = config.clone();
        cfg.tof.cone_rays = BUDGET_CONE_RAYS;
        let chain = cfg.chain()?;
        let q: Vec<f64> = cfg.task.pick.iter().zip(&cfg.task.place).map(|(a, b)| 0.5 * (a + b)).collect();
        let pose = chain.pose(&q)?;
        let rk = chain.ring_kinematics(&pose, &vec![0.0; q.len()]);
        let avatar = cfg.avatar(0.0)?;
        let human = avatar.world_capsules(&advance_avatar(&avatar, 0.0).0);
        Ok(Self {
            scene: Scene::assemble(&cfg.restricted_shapes(), &chain.world_capsules(&pose), &human),
            rings: cfg.rings()?,
            poses: rk.map(|r| r.pose),
        })
    }

    pub fn rays(&self) -> usize {
        self.rings.iter().map(|r| r.rays_per_sensor() * SENSORS_PER_RING).sum()
    }

    /// One tick: sample and mask every ring.
    pub fn run_once(&self, rng: &mut ChaCha8Rng) -> f64 {
        let mut acc = 0.0;
        for (ring, pose) in self.rings.iter().zip(&self.poses) {
            let r = measure_ring(ring, &self.scene, pose, 0.0, rng);
            acc += r.distance.d_min().unwrap_or(0.0);
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub rays: usize,
    pub primitives: usize,
    pub iterations: usize,
    pub mean_ms: f64,
    pub max_ms: f64,
    pub budget_ms: f64,
    pub within_budget: bool,
}

pub fn measure_ray_latency(config: &Config, iterations: usize) -> Result<LatencyReport> {
    let w = Workload::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.sim.seed);
    // warm-up
    for _ in 0..iterations.min(50) {
        std::hint::black_box(w.run_once(&mut rng));
    }
    let mut total = 0.0;
    let mut max: f64 = 0.0;
    for _ in 0..iterations.max(1) {
        let t0 = Instant::now();
        std::hint::black_box(w.run_once(&mut rng));
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        total += ms;
        max = max.max(ms);
    }
    let mean_ms = total / iterations.max(1) as f64;
    Ok(LatencyReport {
        rays: w.rays(),
        primitives: w.scene.primitives().len(),
        iterations: iterations.max(1),
        mean_ms,
        max_ms: max,
        budget_ms: 2.0,
        within_budget: mean_ms <= 2.0,
    })
}
