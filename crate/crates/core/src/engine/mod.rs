//! The seeded loose-packing simulator.
//!
//! One call to [`pack`] is strictly sequential and a pure function of
//! `(recipe, assignment, seed)`: ingredients are visited in a fixed order,
//! each attempt picks a drop point (a free grid point, or a point near an
//! already placed binding partner), jitters around it up to `nb_jitter` times
//! and keeps the first collision-free candidate. An ingredient stops after
//! `rejection_threshold` consecutive failed attempts or once its count is met.
//!
//! `runtime_seconds` is a work-model time (elementary operations times a fixed
//! nominal cost), not wall-clock, so stored outputs are byte-reproducible.

mod cells;
pub mod grid;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geom::{add, min_image_distance, norm, normalize, scale, tangent_basis, Vec3};
use crate::params::{apply_assignment, Assignment};
use crate::recipe::{IngredientOrder, PackingVolume, PointSelection, Recipe, VolumeMode};
use crate::rng::{below, engine_rng, in_unit_ball, in_unit_disk, unit_f64, EngineRng};
use crate::{Error, Result};

pub use cells::CellIndex;
pub use grid::{build_grid, fibonacci_sphere, Grid};

/// Nominal cost of one elementary operation (candidate generation, distance
/// test, grid point visit) in the work-model runtime.
pub const SECONDS_PER_WORK_UNIT: f64 = 5e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacedInstance {
    pub ingredient: String,
    pub position: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigRef {
    pub run_index: u32,
    pub assignment: Assignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackingOutput {
    pub seed: u64,
    pub runtime_seconds: f64,
    pub work_units: u64,
    pub config_ref: ConfigRef,
    pub instances: Vec<PlacedInstance>,
    pub placed_counts: BTreeMap<String, u32>,
    pub requested_counts: BTreeMap<String, u32>,
}

impl PackingOutput {
    pub fn instances_of<'a>(&'a self, ingredient: &'a str) -> impl Iterator<Item = &'a PlacedInstance> + 'a {
        self.instances.iter().filter(move |i| i.ingredient == ingredient)
    }
}

#[inline]
fn overlaps(d: f64, r1: f64, r2: f64) -> bool {
    let contact = r1 + r2;
    d < contact - 1e-9 * contact
}

fn contained(pos: Vec3, radius: f64, volume: &PackingVolume) -> bool {
    if volume.periodic || volume.mode == VolumeMode::SphereSurface {
        return true;
    }
    (0..volume.active_axes()).all(|k| pos[k] - radius >= 0.0 && pos[k] + radius <= volume.extents[k])
}

/// True when a sphere of `radius` at `pos` is inside the volume (unless
/// periodic) and overlaps none of `placed`. Linear scan; the engine uses an
/// equivalent cell-accelerated test.
pub fn collision_free(pos: Vec3, radius: f64, placed: &[PlacedInstance], volume: &PackingVolume) -> bool {
    if !contained(pos, radius, volume) {
        return false;
    }
    let period = volume.period();
    placed
        .iter()
        .all(|q| !overlaps(min_image_distance(pos, q.position, &period), radius, q.radius))
}

/// First overlapping pair in an output, by exhaustive O(n²) scan.
pub fn find_overlap(out: &PackingOutput, volume: &PackingVolume) -> Option<(usize, usize)> {
    let period = volume.period();
    let inst = &out.instances;
    for i in 0..inst.len() {
        for j in i + 1..inst.len() {
            let d = min_image_distance(inst[i].position, inst[j].position, &period);
            if overlaps(d, inst[i].radius, inst[j].radius) {
                return Some((i, j));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropPoint {
    pub position: Vec3,
    /// Grid point index when the drop came from the grid.
    pub grid_point: Option<usize>,
    /// True when the partner-attraction branch produced the point.
    pub biased: bool,
}

/// Mutable state of one packing in progress.
pub struct PackingState<'r> {
    recipe: &'r Recipe,
    volume: PackingVolume,
    period: [Option<f64>; 3],
    grid: Grid,
    cells: CellIndex,
    max_radius: f64,
    positions: Vec<Vec3>,
    radii: Vec<f64>,
    owner: Vec<u32>,
    by_ingredient: Vec<Vec<u32>>,
    /// Partner indices per ingredient, highest weight first.
    partner_order: Vec<Vec<(usize, f64, f64)>>,
    work: u64,
}

impl<'r> PackingState<'r> {
    pub fn new(recipe: &'r Recipe) -> Result<Self> {
        recipe.validate()?;
        let volume = recipe.volume.clone();
        let grid = build_grid(&volume, recipe.defaults.grid_spacing)?;
        let max_radius = recipe.max_radius();
        let (origin, extent) = grid::domain_bounds(&volume);
        let period = volume.period();
        let cells = CellIndex::new(origin, extent, 2.0 * max_radius, period.map(|p| p.is_some()));
        let partner_order = recipe
            .ingredients
            .iter()
            .map(|ing| {
                let mut ps: Vec<(usize, f64, f64)> = ing
                    .partners
                    .iter()
                    .map(|p| {
                        let idx = recipe.ingredient_index(&p.partner_name).expect("validated partner");
                        (idx, p.weight, p.binding_distance)
                    })
                    .collect();
                ps.sort_by(|a, b| b.1.total_cmp(&a.1));
                ps
            })
            .collect();
        Ok(PackingState {
            recipe,
            volume,
            period,
            grid,
            cells,
            max_radius,
            positions: Vec::new(),
            radii: Vec::new(),
            owner: Vec::new(),
            by_ingredient: vec![Vec::new(); recipe.ingredients.len()],
            partner_order,
            work: 0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn work_units(&self) -> u64 {
        self.work
    }

    pub fn instance_count(&self) -> usize {
        self.positions.len()
    }

    pub fn placed_of(&self, ingredient: usize) -> usize {
        self.by_ingredient[ingredient].len()
    }

    /// Maps a raw candidate back into the domain: wraps periodic axes and
    /// projects onto the surface in sphere mode.
    fn normalize_position(&self, mut p: Vec3) -> Vec3 {
        match self.volume.mode {
            VolumeMode::SphereSurface => {
                let n = norm(p);
                if n == 0.0 {
                    return [0.0, 0.0, self.volume.surface_radius()];
                }
                scale(p, self.volume.surface_radius() / n)
            }
            _ => {
                for k in 0..3 {
                    if let Some(len) = self.period[k] {
                        p[k] = p[k].rem_euclid(len);
                        if p[k] >= len {
                            p[k] = 0.0;
                        }
                    }
                }
                if self.volume.mode == VolumeMode::Plane2d {
                    p[2] = 0.0;
                }
                p
            }
        }
    }

    /// Uniform offset of length ≤ `r`: ball in a box, disk in a plane, tangent
    /// disk at `at` on a sphere surface.
    fn random_offset(&self, at: Vec3, r: f64, rng: &mut EngineRng) -> Vec3 {
        match self.volume.mode {
            VolumeMode::Box3d => scale(in_unit_ball(rng), r),
            VolumeMode::Plane2d => scale(in_unit_disk(rng), r),
            VolumeMode::SphereSurface => {
                let (t1, t2) = tangent_basis(normalize(at));
                let d = in_unit_disk(rng);
                add(scale(t1, d[0] * r), scale(t2, d[1] * r))
            }
        }
    }

    pub fn fits(&mut self, pos: Vec3, radius: f64) -> bool {
        if !contained(pos, radius, &self.volume) {
            return false;
        }
        let mut free = true;
        let mut tests = 0u64;
        let (positions, radii, period) = (&self.positions, &self.radii, &self.period);
        self.cells.for_each_near(pos, radius + self.max_radius, |id| {
            if free {
                tests += 1;
                let id = id as usize;
                if overlaps(min_image_distance(pos, positions[id], period), radius, radii[id]) {
                    free = false;
                }
            }
        });
        self.work += tests;
        free
    }

    /// Picks where the next instance of `ingredient` should try to land.
    pub fn choose_drop_point(&mut self, ingredient: usize, rng: &mut EngineRng) -> Result<DropPoint> {
        let partner = self.partner_order[ingredient]
            .iter()
            .find(|(p, _, _)| !self.by_ingredient[*p].is_empty())
            .copied();
        if let Some((p, weight, binding)) = partner {
            // No draw at all when the weight is zero, so weight-0 recipes replay
            // the partner-free random stream exactly.
            if weight > 0.0 && unit_f64(rng) < weight {
                let members = &self.by_ingredient[p];
                let anchor = self.positions[members[below(rng, members.len() as u64) as usize] as usize];
                let offset = self.random_offset(anchor, binding, rng);
                self.work += 1;
                return Ok(DropPoint {
                    position: self.normalize_position(add(anchor, offset)),
                    grid_point: None,
                    biased: true,
                });
            }
        }
        let idx = match self.recipe.defaults.point_selection {
            PointSelection::Random => {
                let n = self.grid.free_count();
                if n == 0 {
                    return Err(Error::NoFreePoint);
                }
                self.grid.nth_free(below(rng, n as u64) as usize)
            }
            PointSelection::Ordered => self.grid.lowest_free().ok_or(Error::NoFreePoint)?,
        };
        self.work += 1;
        Ok(DropPoint {
            position: self.grid.point(idx),
            grid_point: Some(idx),
            biased: false,
        })
    }

    /// Tries the drop point, then up to `nb_jitter - 1` jittered candidates.
    /// Returns the first collision-free position; does not insert it.
    pub fn attempt_place(&mut self, ingredient: usize, drop: &DropPoint, rng: &mut EngineRng) -> Option<Vec3> {
        let ing = &self.recipe.ingredients[ingredient];
        let (radius, tries, jitter) = (ing.radius, ing.nb_jitter, ing.jitter_max);
        for t in 0..tries {
            let cand = if t == 0 {
                drop.position
            } else {
                let off = self.random_offset(drop.position, jitter, rng);
                self.normalize_position(add(drop.position, off))
            };
            self.work += 1;
            if self.fits(cand, radius) {
                return Some(cand);
            }
        }
        None
    }

    /// Records an instance and marks the grid points it covers.
    pub fn insert(&mut self, ingredient: usize, pos: Vec3) {
        let id = self.positions.len() as u32;
        let radius = self.recipe.ingredients[ingredient].radius;
        self.positions.push(pos);
        self.radii.push(radius);
        self.owner.push(ingredient as u32);
        self.by_ingredient[ingredient].push(id);
        self.cells.insert(id, pos);
        self.work += self.grid.occupy_within(pos, radius);
    }

    pub fn instances(&self) -> Vec<PlacedInstance> {
        self.positions
            .iter()
            .zip(&self.radii)
            .zip(&self.owner)
            .map(|((p, r), o)| PlacedInstance {
                ingredient: self.recipe.ingredients[*o as usize].name.clone(),
                position: *p,
                radius: *r,
            })
            .collect()
    }
}

/// Packs `recipe` with `assignment` applied, driven entirely by `seed`.
pub fn pack(recipe: &Recipe, assignment: &Assignment, seed: u64) -> Result<PackingOutput> {
    let recipe = apply_assignment(recipe, assignment)?;
    let mut state = PackingState::new(&recipe)?;
    let mut rng = engine_rng(seed);
    let n = recipe.ingredients.len();

    let mut by_radius: Vec<usize> = (0..n).collect();
    by_radius.sort_by(|&a, &b| recipe.ingredients[b].radius.total_cmp(&recipe.ingredients[a].radius));

    let mut exhausted: Vec<bool> = recipe.ingredients.iter().map(|i| i.count_requested == 0).collect();
    let mut failures = vec![0u32; n];

    loop {
        let next = match recipe.defaults.ingredient_order {
            IngredientOrder::ByRadiusDesc => by_radius.iter().copied().find(|&i| !exhausted[i]),
            IngredientOrder::RandomInterleave => {
                let remaining: Vec<u64> = (0..n)
                    .map(|i| {
                        if exhausted[i] {
                            0
                        } else {
                            (recipe.ingredients[i].count_requested as usize - state.placed_of(i)) as u64
                        }
                    })
                    .collect();
                let total: u64 = remaining.iter().sum();
                if total == 0 {
                    None
                } else {
                    let mut pick = below(&mut rng, total);
                    remaining.iter().position(|&r| {
                        if pick < r {
                            true
                        } else {
                            pick -= r;
                            false
                        }
                    })
                }
            }
        };
        let Some(i) = next else { break };
        let ing = &recipe.ingredients[i];

        let placed = match state.choose_drop_point(i, &mut rng) {
            Ok(drop) => state.attempt_place(i, &drop, &mut rng),
            Err(Error::NoFreePoint) => None,
            Err(e) => return Err(e),
        };
        match placed {
            Some(pos) => {
                state.insert(i, pos);
                failures[i] = 0;
                if state.placed_of(i) >= ing.count_requested as usize {
                    exhausted[i] = true;
                }
            }
            None => {
                failures[i] += 1;
                if failures[i] >= ing.rejection_threshold {
                    exhausted[i] = true;
                }
            }
        }
    }

    let placed_counts = recipe
        .ingredients
        .iter()
        .enumerate()
        .map(|(i, ing)| (ing.name.clone(), state.placed_of(i) as u32))
        .collect();
    let requested_counts = recipe
        .ingredients
        .iter()
        .map(|ing| (ing.name.clone(), ing.count_requested))
        .collect();
    let work = state.work_units();
    Ok(PackingOutput {
        seed,
        runtime_seconds: work as f64 * SECONDS_PER_WORK_UNIT,
        work_units: work,
        config_ref: ConfigRef {
            run_index: 0,
            assignment: assignment.clone(),
        },
        instances: state.instances(),
        placed_counts,
        requested_counts,
    })
}
