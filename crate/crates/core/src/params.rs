//! Parameter paths (`global.<field>`, `ingredient.<name|*>.<field>`,
//! `ingredient.<name|*>.partner.<partner>.<field>`) and assignment of concrete
//! values to a recipe.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::recipe::{Ingredient, IngredientOrder, PointSelection, Recipe};
use crate::{Error, Result};

/// A concrete parameter value. Integers and reals stay distinct on the wire so
/// integer-kinded parameters round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Num(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Num(x) => Some(x),
            ParamValue::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Num(x) => write!(f, "{x}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

/// Map from parameter path to value; ordered so serialization is canonical.
pub type Assignment = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Numeric,
    Integer,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalField {
    GridSpacing,
    PointSelection,
    IngredientOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngredientField {
    Radius,
    Count,
    NbJitter,
    JitterMax,
    RejectionThreshold,
    /// Weight of every partner of the selected ingredients.
    Weight,
    BindingDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartnerField {
    Weight,
    BindingDistance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    All,
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamPath {
    Global(GlobalField),
    Ingredient(Selector, IngredientField),
    Partner(Selector, String, PartnerField),
}

impl ParamPath {
    pub fn parse(path: &str) -> Result<Self> {
        let bad = || Error::Validation(vec![format!("unknown parameter path `{path}`")]);
        let parts: Vec<&str> = path.split('.').collect();
        match parts.as_slice() {
            ["global", field] => {
                let f = match *field {
                    "grid_spacing" => GlobalField::GridSpacing,
                    "point_selection" => GlobalField::PointSelection,
                    "ingredient_order" => GlobalField::IngredientOrder,
                    _ => return Err(bad()),
                };
                Ok(ParamPath::Global(f))
            }
            ["ingredient", sel, field] => {
                let f = match *field {
                    "radius" => IngredientField::Radius,
                    "count" => IngredientField::Count,
                    "nb_jitter" => IngredientField::NbJitter,
                    "jitter_max" => IngredientField::JitterMax,
                    "rejection_threshold" => IngredientField::RejectionThreshold,
                    "weight" => IngredientField::Weight,
                    "binding_distance" => IngredientField::BindingDistance,
                    _ => return Err(bad()),
                };
                Ok(ParamPath::Ingredient(selector(sel), f))
            }
            ["ingredient", sel, "partner", partner, field] => {
                let f = match *field {
                    "weight" => PartnerField::Weight,
                    "binding_distance" => PartnerField::BindingDistance,
                    _ => return Err(bad()),
                };
                Ok(ParamPath::Partner(selector(sel), partner.to_string(), f))
            }
            _ => Err(bad()),
        }
    }

    /// The natural kind of the field this path addresses.
    pub fn kind(&self) -> ParamKind {
        match self {
            ParamPath::Global(GlobalField::GridSpacing) => ParamKind::Numeric,
            ParamPath::Global(_) => ParamKind::Categorical,
            ParamPath::Ingredient(_, f) => match f {
                IngredientField::Count
                | IngredientField::NbJitter
                | IngredientField::RejectionThreshold => ParamKind::Integer,
                _ => ParamKind::Numeric,
            },
            ParamPath::Partner(..) => ParamKind::Numeric,
        }
    }

    /// Allowed values of categorical fields.
    pub fn categories(&self) -> Option<&'static [&'static str]> {
        match self {
            ParamPath::Global(GlobalField::PointSelection) => Some(&["random", "ordered"]),
            ParamPath::Global(GlobalField::IngredientOrder) => {
                Some(&["by_radius_desc", "random_interleave"])
            }
            _ => None,
        }
    }

    /// Checks that the path addresses at least one existing field of `recipe`.
    pub fn resolve(&self, recipe: &Recipe) -> Result<()> {
        let missing = |what: String| Err(Error::Validation(vec![what]));
        match self {
            ParamPath::Global(_) => Ok(()),
            ParamPath::Ingredient(sel, field) => {
                let targets = select(recipe, sel);
                if targets.is_empty() {
                    return missing(format!("no ingredient matches `{}`", sel_name(sel)));
                }
                if matches!(field, IngredientField::Weight | IngredientField::BindingDistance)
                    && targets.iter().all(|&i| recipe.ingredients[i].partners.is_empty())
                {
                    return missing(format!("ingredient `{}` has no partners", sel_name(sel)));
                }
                Ok(())
            }
            ParamPath::Partner(sel, partner, _) => {
                let targets = select(recipe, sel);
                let hit = targets.iter().any(|&i| {
                    recipe.ingredients[i]
                        .partners
                        .iter()
                        .any(|p| &p.partner_name == partner)
                });
                if hit {
                    Ok(())
                } else {
                    missing(format!(
                        "ingredient `{}` has no partner `{partner}`",
                        sel_name(sel)
                    ))
                }
            }
        }
    }
}

fn selector(s: &str) -> Selector {
    if s == "*" {
        Selector::All
    } else {
        Selector::Named(s.to_string())
    }
}

fn sel_name(sel: &Selector) -> &str {
    match sel {
        Selector::All => "*",
        Selector::Named(n) => n,
    }
}

fn select(recipe: &Recipe, sel: &Selector) -> Vec<usize> {
    match sel {
        Selector::All => (0..recipe.ingredients.len()).collect(),
        Selector::Named(n) => recipe.ingredient_index(n).into_iter().collect(),
    }
}

fn number(path: &str, v: &ParamValue) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::Validation(vec![format!("{path}: expected a number, got `{v}`")]))
}

fn integer(path: &str, v: &ParamValue) -> Result<u32> {
    let bad = || Error::Validation(vec![format!("{path}: expected a non-negative integer, got `{v}`")]);
    let x = match *v {
        ParamValue::Int(i) => i as f64,
        ParamValue::Num(x) if x.fract() == 0.0 => x,
        _ => return Err(bad()),
    };
    if (0.0..=u32::MAX as f64).contains(&x) {
        Ok(x as u32)
    } else {
        Err(bad())
    }
}

fn set_ingredient(ing: &mut Ingredient, field: IngredientField, path: &str, v: &ParamValue) -> Result<()> {
    match field {
        IngredientField::Radius => ing.radius = number(path, v)?,
        IngredientField::Count => ing.count_requested = integer(path, v)?,
        IngredientField::NbJitter => ing.nb_jitter = integer(path, v)?,
        IngredientField::JitterMax => ing.jitter_max = number(path, v)?,
        IngredientField::RejectionThreshold => ing.rejection_threshold = integer(path, v)?,
        IngredientField::Weight => {
            let w = number(path, v)?;
            ing.partners.iter_mut().for_each(|p| p.weight = w);
        }
        IngredientField::BindingDistance => {
            let d = number(path, v)?;
            ing.partners.iter_mut().for_each(|p| p.binding_distance = d);
        }
    }
    Ok(())
}

/// Returns a copy of `recipe` with every path in `assignment` overridden.
/// The result is validated.
pub fn apply_assignment(recipe: &Recipe, assignment: &Assignment) -> Result<Recipe> {
    let mut r = recipe.clone();
    for (path, value) in assignment {
        let parsed = ParamPath::parse(path)?;
        parsed.resolve(&r)?;
        match &parsed {
            ParamPath::Global(GlobalField::GridSpacing) => {
                r.defaults.grid_spacing = number(path, value)?
            }
            ParamPath::Global(GlobalField::PointSelection) => {
                r.defaults.point_selection = match value.as_text() {
                    Some("random") => PointSelection::Random,
                    Some("ordered") => PointSelection::Ordered,
                    _ => return Err(Error::Validation(vec![format!("{path}: invalid value `{value}`")])),
                }
            }
            ParamPath::Global(GlobalField::IngredientOrder) => {
                r.defaults.ingredient_order = match value.as_text() {
                    Some("by_radius_desc") => IngredientOrder::ByRadiusDesc,
                    Some("random_interleave") => IngredientOrder::RandomInterleave,
                    _ => return Err(Error::Validation(vec![format!("{path}: invalid value `{value}`")])),
                }
            }
            ParamPath::Ingredient(sel, field) => {
                for i in select(&r, sel) {
                    set_ingredient(&mut r.ingredients[i], *field, path, value)?;
                }
            }
            ParamPath::Partner(sel, partner, field) => {
                let x = number(path, value)?;
                for i in select(&r, sel) {
                    for p in r.ingredients[i].partners.iter_mut().filter(|p| &p.partner_name == partner) {
                        match field {
                            PartnerField::Weight => p.weight = x,
                            PartnerField::BindingDistance => p.binding_distance = x,
                        }
                    }
                }
            }
        }
    }
    r.validate()?;
    Ok(r)
}
