//! Command-line filter grammar: `name=[lo,hi]` selects a closed interval and
//! `name={a,b,...}` a set of values.

use packlab_core::xfilter::{Predicate, RowGroup};

#[derive(Debug, PartialEq, Eq)]
pub struct FilterSyntaxError(pub String);

impl std::fmt::Display for FilterSyntaxError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for FilterSyntaxError {}

pub fn parse_filter(text: &str) -> Result<(String, Predicate), FilterSyntaxError> {
    let err = |m: &str| FilterSyntaxError(format!("filter {text:?}: {m}"));
    let (name, body) = text.split_once('=').ok_or_else(|| err("expected name=[lo,hi] or name={a,b}"))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(err("missing dimension name"));
    }
    let body = body.trim();
    if let Some(inner) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        let [lo, hi] = parts[..] else {
            return Err(err("an interval needs exactly two bounds"));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("{s:?} is not a number")));
        return Ok((name.to_string(), Predicate::Range([num(lo)?, num(hi)?])));
    }
    if let Some(inner) = body.strip_prefix('{').and_then(|b| b.strip_suffix('}')) {
        let values: Vec<String> = inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        return Ok((name.to_string(), Predicate::OneOf(values)));
    }
    Err(err("value must be [lo,hi] or {a,b,...}"))
}

/// All filters ANDed into one row.
pub fn parse_row(filters: &[String]) -> Result<RowGroup, FilterSyntaxError> {
    let mut row = RowGroup::new();
    for f in filters {
        let (name, p) = parse_filter(f)?;
        if row.filters.insert(name.clone(), p).is_some() {
            return Err(FilterSyntaxError(format!("dimension {name} filtered twice")));
        }
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intervals_and_sets() {
        assert_eq!(parse_filter("usage=[1.0,1.0]").unwrap(), ("usage".into(), Predicate::Range([1.0, 1.0])));
        assert_eq!(
            parse_filter(" global.point_selection = {random, ordered} ").unwrap(),
            ("global.point_selection".into(), Predicate::OneOf(vec!["random".into(), "ordered".into()]))
        );
        assert_eq!(parse_filter("x={}").unwrap().1, Predicate::OneOf(vec![]));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["usage", "=[0,1]", "usage=[0]", "usage=[a,1]", "usage=0.5", "usage=[0,1,2]"] {
            assert!(parse_filter(bad).is_err(), "{bad}");
        }
        assert!(parse_row(&["a=[0,1]".into(), "a=[0,2]".into()]).is_err());
    }
}
