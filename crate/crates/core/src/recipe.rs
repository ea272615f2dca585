//! Packing problem description: volume, ingredients and general parameters.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{canonical, Error, Result};

pub const DEFAULT_NB_JITTER: u32 = 10;
pub const DEFAULT_REJECTION_THRESHOLD: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMode {
    Box3d,
    Plane2d,
    SphereSurface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackingVolume {
    pub mode: VolumeMode,
    /// Box: x, y, z. Plane: x, y, 0. Sphere surface: radius in `extents[0]`.
    pub extents: [f64; 3],
    #[serde(default)]
    pub periodic: bool,
}

impl PackingVolume {
    pub fn box3d(x: f64, y: f64, z: f64) -> Self {
        PackingVolume {
            mode: VolumeMode::Box3d,
            extents: [x, y, z],
            periodic: false,
        }
    }

    pub fn plane2d(x: f64, y: f64) -> Self {
        PackingVolume {
            mode: VolumeMode::Plane2d,
            extents: [x, y, 0.0],
            periodic: false,
        }
    }

    pub fn sphere_surface(radius: f64) -> Self {
        PackingVolume {
            mode: VolumeMode::SphereSurface,
            extents: [radius, 0.0, 0.0],
            periodic: false,
        }
    }

    pub fn with_periodic(mut self, periodic: bool) -> Self {
        self.periodic = periodic;
        self
    }

    /// Number of spatial dimensions instances move in (sphere surface counts as 3).
    pub fn active_axes(&self) -> usize {
        match self.mode {
            VolumeMode::Plane2d => 2,
            VolumeMode::Box3d | VolumeMode::SphereSurface => 3,
        }
    }

    /// Period per axis for minimum-image distances; `None` on non-periodic axes.
    pub fn period(&self) -> [Option<f64>; 3] {
        if !self.periodic || self.mode == VolumeMode::SphereSurface {
            return [None; 3];
        }
        let mut p = [None; 3];
        for (k, slot) in p.iter_mut().enumerate().take(self.active_axes()) {
            *slot = Some(self.extents[k]);
        }
        p
    }

    /// Volume (box), area (plane) or surface area (sphere).
    pub fn measure(&self) -> f64 {
        let e = self.extents;
        match self.mode {
            VolumeMode::Box3d => e[0] * e[1] * e[2],
            VolumeMode::Plane2d => e[0] * e[1],
            VolumeMode::SphereSurface => 4.0 * std::f64::consts::PI * e[0] * e[0],
        }
    }

    pub fn surface_radius(&self) -> f64 {
        self.extents[0]
    }

    fn smallest_extent(&self) -> f64 {
        match self.mode {
            VolumeMode::Box3d => self.extents.iter().copied().fold(f64::INFINITY, f64::min),
            VolumeMode::Plane2d => self.extents[0].min(self.extents[1]),
            VolumeMode::SphereSurface => self.extents[0],
        }
    }

    fn violations(&self, out: &mut Vec<String>) {
        let e = self.extents;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self.mode {
            VolumeMode::Box3d => {
                if !e.iter().all(|&v| positive(v)) {
                    out.push("volume: box extents must all be > 0".into());
                }
            }
            VolumeMode::Plane2d => {
                if !(positive(e[0]) && positive(e[1])) {
                    out.push("volume: plane extents x and y must be > 0".into());
                }
                if e[2] != 0.0 {
                    out.push("volume: plane z extent must be 0".into());
                }
            }
            VolumeMode::SphereSurface => {
                if !positive(e[0]) {
                    out.push("volume: sphere surface radius must be > 0".into());
                }
                if self.periodic {
                    out.push("volume: sphere_surface cannot be periodic".into());
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartnerSpec {
    #[serde(rename = "name")]
    pub partner_name: String,
    #[serde(default)]
    pub weight: f64,
    pub binding_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ingredient {
    pub name: String,
    pub radius: f64,
    #[serde(rename = "count")]
    pub count_requested: u32,
    pub nb_jitter: u32,
    pub jitter_max: f64,
    pub rejection_threshold: u32,
    pub partners: Vec<PartnerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSelection {
    #[default]
    Random,
    Ordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngredientOrder {
    #[default]
    ByRadiusDesc,
    RandomInterleave,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralParams {
    pub grid_spacing: f64,
    #[serde(default)]
    pub point_selection: PointSelection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ingredient_order: IngredientOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recipe {
    pub name: String,
    pub volume: PackingVolume,
    pub defaults: GeneralParams,
    pub ingredients: Vec<Ingredient>,
}

/// On-disk ingredient: per-ingredient behaviour parameters may be omitted.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IngredientDoc {
    name: String,
    radius: f64,
    count: u32,
    nb_jitter: Option<u32>,
    jitter_max: Option<f64>,
    rejection_threshold: Option<u32>,
    #[serde(default)]
    partners: Vec<PartnerSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeDoc {
    name: String,
    volume: PackingVolume,
    defaults: GeneralParams,
    ingredients: Vec<IngredientDoc>,
}

impl From<RecipeDoc> for Recipe {
    fn from(doc: RecipeDoc) -> Self {
        let spacing = doc.defaults.grid_spacing;
        let ingredients = doc
            .ingredients
            .into_iter()
            .map(|i| Ingredient {
                name: i.name,
                radius: i.radius,
                count_requested: i.count,
                nb_jitter: i.nb_jitter.unwrap_or(DEFAULT_NB_JITTER),
                jitter_max: i.jitter_max.unwrap_or(spacing),
                rejection_threshold: i.rejection_threshold.unwrap_or(DEFAULT_REJECTION_THRESHOLD),
                partners: i.partners,
            })
            .collect();
        Recipe {
            name: doc.name,
            volume: doc.volume,
            defaults: doc.defaults,
            ingredients,
        }
    }
}

impl<'de> Deserialize<'de> for Recipe {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        RecipeDoc::deserialize(d).map(Recipe::from)
    }
}

/// Parses and validates a recipe document, filling omitted ingredient
/// parameters with their defaults (`nb_jitter` 10, `jitter_max` = grid
/// spacing, `rejection_threshold` 100, partner `weight` 0).
pub fn parse_recipe(text: &str) -> Result<Recipe> {
    let recipe: Recipe = canonical::from_str(text)?;
    recipe.validate()?;
    Ok(recipe)
}

/// Every invariant violation of the recipe; empty means valid.
pub fn validate_recipe(r: &Recipe) -> Vec<String> {
    let mut out = Vec::new();
    r.volume.violations(&mut out);

    let g = &r.defaults;
    if !(g.grid_spacing.is_finite() && g.grid_spacing > 0.0) {
        out.push("defaults: grid_spacing must be > 0".into());
    } else if g.grid_spacing > r.volume.smallest_extent() {
        out.push("defaults: grid_spacing must not exceed the smallest volume extent".into());
    }

    if r.ingredients.is_empty() {
        out.push("recipe: at least one ingredient is required".into());
    }
    let names: BTreeSet<&str> = r.ingredients.iter().map(|i| i.name.as_str()).collect();
    let mut seen = BTreeSet::new();
    for ing in &r.ingredients {
        let n = &ing.name;
        if n.is_empty() || n.contains('.') || n == "*" {
            out.push(format!("ingredient `{n}`: name must be non-empty and contain no '.' or '*'"));
        }
        if !seen.insert(n.as_str()) {
            out.push(format!("ingredient {n}: duplicate name"));
        }
        if !(ing.radius.is_finite() && ing.radius > 0.0) {
            out.push(format!("ingredient {n}: radius must be > 0"));
        }
        if ing.nb_jitter < 1 {
            out.push(format!("ingredient {n}: nb_jitter must be >= 1"));
        }
        if !(ing.jitter_max.is_finite() && ing.jitter_max >= 0.0) {
            out.push(format!("ingredient {n}: jitter_max must be >= 0"));
        }
        if ing.rejection_threshold < 1 {
            out.push(format!("ingredient {n}: rejection_threshold must be >= 1"));
        }
        for p in &ing.partners {
            if !names.contains(p.partner_name.as_str()) {
                out.push(format!(
                    "ingredient {n}: partner `{}` is not an ingredient of this recipe",
                    p.partner_name
                ));
            }
            if !(0.0..=1.0).contains(&p.weight) {
                out.push(format!("ingredient {n}: partner {} weight must be in [0, 1]", p.partner_name));
            }
            if !(p.binding_distance.is_finite() && p.binding_distance > 0.0) {
                out.push(format!(
                    "ingredient {n}: partner {} binding_distance must be > 0",
                    p.partner_name
                ));
            }
        }
    }
    out
}

impl Ingredient {
    /// Default jitter and rejection settings, `jitter_max` equal to the radius.
    pub fn new(name: &str, radius: f64, count: u32) -> Self {
        Ingredient {
            name: name.to_string(),
            radius,
            count_requested: count,
            nb_jitter: DEFAULT_NB_JITTER,
            jitter_max: radius,
            rejection_threshold: DEFAULT_REJECTION_THRESHOLD,
            partners: Vec::new(),
        }
    }

    pub fn with_jitter(mut self, nb_jitter: u32, jitter_max: f64) -> Self {
        self.nb_jitter = nb_jitter;
        self.jitter_max = jitter_max;
        self
    }

    pub fn with_rejection_threshold(mut self, t: u32) -> Self {
        self.rejection_threshold = t;
        self
    }

    pub fn with_partner(mut self, name: &str, weight: f64, binding_distance: f64) -> Self {
        self.partners.push(PartnerSpec {
            partner_name: name.to_string(),
            weight,
            binding_distance,
        });
        self
    }
}

impl Recipe {
    pub fn new(name: &str, volume: PackingVolume, grid_spacing: f64, ingredients: Vec<Ingredient>) -> Self {
        Recipe {
            name: name.to_string(),
            volume,
            defaults: GeneralParams {
                grid_spacing,
                point_selection: PointSelection::Random,
                seed: 0,
                ingredient_order: IngredientOrder::ByRadiusDesc,
            },
            ingredients,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = validate_recipe(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn ingredient_index(&self, name: &str) -> Option<usize> {
        self.ingredients.iter().position(|i| i.name == name)
    }

    pub fn max_radius(&self) -> f64 {
        self.ingredients.iter().map(|i| i.radius).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        canonical::to_string_pretty(self)
    }
}
