//! End-to-end planning: voxelize, sample orientations, correlate, decode,
//! check normals, rank, and fall back to a single cup when nothing survives.

use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::candidate::{CandidateSource, GraspCandidate, Pixel};
use crate::config::PlannerConfig;
use crate::conv::SparseCorrelator;
use crate::decode::{active_count, candidate_at, decode_activation, NormalCheck};
use crate::error::Result;
use crate::gripper::GripperSpec;
use crate::kernel::generate_encoded_kernels;
use crate::orientation::{half_turn_spin, sample_gripper_orientations, NormalOrientationMap};
use crate::rank::{cluster_affordance, rank_scored, score_candidate, RankedEntry, RankedPlan};
use crate::real::Real;
use crate::rotation::{vec_to_angles, zyz_rotation};
use crate::scene::{is_valid_vector, AffordanceScene};
use crate::voxel::generate_voxel_grid;

#[derive(Debug, Clone)]
pub struct PlanRequest<'a, T: Real> {
    pub scene: &'a AffordanceScene<T>,
    pub gripper: &'a GripperSpec<T>,
    pub config: &'a PlannerConfig<T>,
    /// Current TCP position, used to pick the fallback cup.
    pub current_tcp: Option<Vector3<T>>,
    /// Prebuilt map matching the config's angle interval and normal tolerance.
    pub orientation_map: Option<&'a NormalOrientationMap>,
}

impl<'a, T: Real> PlanRequest<'a, T> {
    pub fn new(
        scene: &'a AffordanceScene<T>,
        gripper: &'a GripperSpec<T>,
        config: &'a PlannerConfig<T>,
    ) -> Self {
        PlanRequest {
            scene,
            gripper,
            config,
            current_tcp: None,
            orientation_map: None,
        }
    }

    pub fn with_current_tcp(mut self, tcp: Vector3<T>) -> Self {
        self.current_tcp = Some(tcp);
        self
    }

    pub fn with_orientation_map(mut self, map: &'a NormalOrientationMap) -> Self {
        self.orientation_map = Some(map);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    MultiCup,
    SingleCupFallback,
    NoSolution,
}

impl PlanKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlanKind::MultiCup => "multi_cup",
            PlanKind::SingleCupFallback => "single_cup_fallback",
            PlanKind::NoSolution => "no_solution",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub millis: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlanCounters {
    pub masked_pixels: usize,
    pub grid_cells: usize,
    pub occupied_cells: usize,
    pub orientations: usize,
    pub kernels_built: usize,
    pub kernels_dropped: usize,
    /// Kernels correlated × grid cells.
    pub cells_convolved: usize,
    pub clusters: usize,
    pub candidates_decoded: usize,
    pub candidates_after_normal_check: usize,
    pub candidates_scored: usize,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome<T: Real> {
    pub kind: PlanKind,
    /// Ranked multi-cup candidates, present for [`PlanKind::MultiCup`].
    pub plan: Option<RankedPlan<T>>,
    /// Present for [`PlanKind::SingleCupFallback`].
    pub fallback: Option<GraspCandidate<T>>,
    pub timings: Vec<StageTiming>,
    pub counters: PlanCounters,
}

impl<T: Real> PlanOutcome<T> {
    /// The selected grasp, if any.
    pub fn optimal(&self) -> Option<&GraspCandidate<T>> {
        match self.kind {
            PlanKind::MultiCup => self.plan.as_ref().map(|p| &p.optimal().candidate),
            PlanKind::SingleCupFallback => self.fallback.as_ref(),
            PlanKind::NoSolution => None,
        }
    }
}

struct Stopwatch {
    timings: Vec<StageTiming>,
    last: Instant,
}

impl Stopwatch {
    fn new() -> Self {
        Stopwatch {
            timings: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.push(stage, (now - self.last).as_secs_f64() * 1e3);
        self.last = now;
    }

    fn push(&mut self, stage: &'static str, millis: f64) {
        self.timings.push(StageTiming { stage, millis });
    }
}

#[derive(Default)]
struct KernelYield<T: Real> {
    entries: Vec<RankedEntry<T>>,
    decoded: usize,
    normal_ok: usize,
    correlate_ms: f64,
    evaluate_ms: f64,
}

pub fn plan<T: Real>(req: &PlanRequest<'_, T>) -> Result<PlanOutcome<T>> {
    let (scene, gripper, config) = (req.scene, req.gripper, req.config);
    config.validate()?;
    let mut watch = Stopwatch::new();
    let mut counters = PlanCounters {
        masked_pixels: scene.masked_indices().len(),
        ..PlanCounters::default()
    };
    let outcome = |kind, plan, fallback, watch: Stopwatch, counters| PlanOutcome {
        kind,
        plan,
        fallback,
        timings: watch.timings,
        counters,
    };
    if counters.masked_pixels == 0 {
        return Ok(outcome(PlanKind::NoSolution, None, None, watch, counters));
    }

    let grid = generate_voxel_grid(scene, config.voxel_size, config.min_points_per_voxel)?;
    counters.grid_cells = grid.cell_count();
    counters.occupied_cells = grid.occupied().len();
    watch.lap("voxelize");

    let built;
    let map = match req.orientation_map {
        Some(m) if m.matches(config.angle_interval.as_f64(), config.eps_normal.as_f64()) => m,
        _ => {
            built = NormalOrientationMap::build(config.angle_interval.as_f64(), config.eps_normal.as_f64())?;
            &built
        }
    };
    watch.lap("orientation_map");

    let half_turn = half_turn_spin(config.symmetric_gamma, gripper);
    let samples = sample_gripper_orientations(scene, map, config.top_fraction, half_turn);
    counters.orientations = samples.len();
    watch.lap("sample_orientations");

    let kernels = generate_encoded_kernels(&samples.rotations, gripper, config.voxel_size)?;
    counters.kernels_built = kernels.len();
    counters.kernels_dropped = kernels.collision_count();
    watch.lap("build_kernels");

    let maps = cluster_affordance(scene, config.voxel_size, config.min_cluster_size);
    counters.clusters = maps.clusters.len();
    let check = NormalCheck::new(scene, config.voxel_size, config.eps_normal);
    watch.lap("cluster");

    let n_c = gripper.cup_count();
    let live: Vec<usize> = (0..kernels.len()).filter(|&n| !kernels.kernels[n].collision).collect();
    counters.cells_convolved = live.len() * grid.cell_count();
    let yields: Vec<KernelYield<T>> = live
        .par_iter()
        .map_init(
            || (SparseCorrelator::default(), Vec::<(usize, u32)>::new()),
            |(corr, hits), &n| {
                let mut y = KernelYield::default();
                let t0 = Instant::now();
                hits.clear();
                corr.run(&grid, &kernels.kernels[n], |cell, v| {
                    if active_count(v, n_c) >= 2 {
                        hits.push((cell, v));
                    }
                });
                let t1 = Instant::now();
                for &(cell, v) in hits.iter() {
                    y.decoded += 1;
                    let c = candidate_at(&grid, &samples, gripper, n, cell, decode_activation(v, n_c));
                    if !check.accepts(&c) {
                        continue;
                    }
                    y.normal_ok += 1;
                    if let Some(score) = score_candidate(&c, &maps, scene, config) {
                        y.entries.push(RankedEntry { score, candidate: c });
                    }
                }
                y.correlate_ms = (t1 - t0).as_secs_f64() * 1e3;
                y.evaluate_ms = t1.elapsed().as_secs_f64() * 1e3;
                y
            },
        )
        .collect();
    let mut entries = Vec::new();
    let (mut correlate_ms, mut evaluate_ms) = (0.0, 0.0);
    for y in yields {
        counters.candidates_decoded += y.decoded;
        counters.candidates_after_normal_check += y.normal_ok;
        counters.candidates_scored += y.entries.len();
        correlate_ms += y.correlate_ms;
        evaluate_ms += y.evaluate_ms;
        entries.extend(y.entries);
    }
    watch.lap("correlate_decode_check");
    watch.push("correlate_cpu", correlate_ms);
    watch.push("decode_check_score_cpu", evaluate_ms);

    let ranked = rank_scored(entries);
    watch.lap("rank");
    if let Some(plan) = ranked {
        return Ok(outcome(PlanKind::MultiCup, Some(plan), None, watch, counters));
    }

    let fallback = single_cup_fallback(scene, gripper, req.current_tcp);
    watch.lap("fallback");
    Ok(match fallback {
        Some(c) => outcome(PlanKind::SingleCupFallback, None, Some(c), watch, counters),
        None => outcome(PlanKind::NoSolution, None, None, watch, counters),
    })
}

/// Pixel with the highest affordance among pixels with a valid point and
/// normal. Ties go to the pixel nearest the image centre, then raster order.
pub fn fallback_pixel<T: Real>(scene: &AffordanceScene<T>) -> Option<Pixel> {
    let aff = scene.affordance();
    let (cu, cv) = (
        (scene.width() as f64 - 1.0) / 2.0,
        (scene.height() as f64 - 1.0) / 2.0,
    );
    let mut best: Option<(usize, f64, f64)> = None;
    for i in 0..aff.len() {
        let a = aff[i].as_f64();
        if !(a > 0.0) || !is_valid_vector(&scene.normals()[i]) {
            continue;
        }
        let p = aff.pixel_of(i);
        let d2 = (p.u as f64 - cu).powi(2) + (p.v as f64 - cv).powi(2);
        let better = match best {
            None => true,
            Some((_, ba, bd)) => a > ba || (a == ba && d2 < bd),
        };
        if better {
            best = Some((i, a, d2));
        }
    }
    best.map(|(i, _, _)| aff.pixel_of(i))
}

/// Single-cup grasp at [`fallback_pixel`], approach axis along the point's
/// normal and zero spin. The active cup is the one whose TCP lands closest to
/// `current_tcp`, or cup 0 without one.
pub fn single_cup_fallback<T: Real>(
    scene: &AffordanceScene<T>,
    gripper: &GripperSpec<T>,
    current_tcp: Option<Vector3<T>>,
) -> Option<GraspCandidate<T>> {
    let pixel = fallback_pixel(scene)?;
    let i = scene.affordance().index_of(pixel);
    let point = scene.points()[i];
    let (theta, phi) = vec_to_angles(&scene.normals()[i]).ok()?;
    let o = zyz_rotation(theta, phi, T::zero());
    let tcp_for = |cup: usize| point - o * gripper.cup_centers()[cup];
    let cup = match current_tcp {
        None => 0,
        Some(cur) => (0..gripper.cup_count())
            .map(|k| (k, (tcp_for(k) - cur).norm()))
            .fold((0, T::max_value().unwrap()), |best, cur| {
                if cur.1 < best.1 {
                    cur
                } else {
                    best
                }
            })
            .0,
    };
    let mut activation = vec![false; gripper.cup_count()];
    activation[cup] = true;
    Some(GraspCandidate::new(
        tcp_for(cup),
        o,
        gripper,
        activation,
        CandidateSource::SingleCupFallback { pixel },
    ))
}
