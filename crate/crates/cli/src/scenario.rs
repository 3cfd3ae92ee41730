//! Scenario files: one `key = value` per line, `#` starts a comment.
//!
//! ```text
//! model = latency
//! value = 2
//! capacities = 0.3, 0.7
//! a_grid = 0:0.05:1
//! ```

use std::collections::HashMap;
use std::fmt;

use pmp_core::duopoly::ResponseMode;
use pmp_core::{CongestionModel, TypeDistribution};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// 1-based; `None` for whole-file problems.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ParseError {}

fn at(line: usize, message: impl Into<String>) -> ParseError {
    ParseError { line: Some(line), message: message.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: CongestionModel,
    pub value: f64,
    pub dist: TypeDistribution,
    pub capacities: Option<Vec<f64>>,
    pub split: Option<Vec<f64>>,
    pub capacity_i: Option<f64>,
    pub capacity_ii: Option<f64>,
    pub modes: Vec<ResponseMode>,
    pub a_grid: Option<Vec<f64>>,
    pub p_grid: Option<usize>,
    pub prices: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub tol: Option<f64>,
}

const KEYS: &[&str] = &[
    "model",
    "service_cv2",
    "queue_len",
    "failure_factor",
    "default_use",
    "value",
    "distribution",
    "theta_bar",
    "cdf_points",
    "capacities",
    "split",
    "capacity_i",
    "capacity_ii",
    "modes",
    "a_grid",
    "p_grid",
    "prices",
    "delta",
    "tol",
];

struct Entry {
    line: usize,
    value: String,
}

fn number(e: &Entry, key: &str) -> Result<f64, ParseError> {
    let v: f64 = e
        .value
        .parse()
        .map_err(|_| at(e.line, format!("`{key}` expects a number, got `{}`", e.value)))?;
    if !v.is_finite() {
        return Err(at(e.line, format!("`{key}` must be finite")));
    }
    Ok(v)
}

fn list(e: &Entry, key: &str) -> Result<Vec<f64>, ParseError> {
    if e.value.is_empty() {
        return Err(at(e.line, format!("`{key}` is empty")));
    }
    e.value
        .split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| at(e.line, format!("`{key}`: `{s}` is not a finite number")))
        })
        .collect()
}

/// `start:step:stop` (inclusive) or a comma-separated list.
fn grid(e: &Entry, key: &str) -> Result<Vec<f64>, ParseError> {
    let parts: Vec<&str> = e.value.split(':').map(str::trim).collect();
    if parts.len() == 1 {
        return list(e, key);
    }
    if parts.len() != 3 {
        return Err(at(e.line, format!("`{key}` range must be start:step:stop")));
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| at(e.line, format!("`{key}`: `{s}` is not a finite number")))
    };
    let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(step > 0.0) {
        return Err(at(e.line, format!("`{key}` step must be positive")));
    }
    if stop < start {
        return Err(at(e.line, format!("`{key}` range is empty")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    let mut values: Vec<f64> = (0..=n).map(|i| start + step * i as f64).collect();
    // snap the accumulated endpoint onto `stop` when it was meant to hit it
    if let Some(last) = values.last_mut() {
        if (*last - stop).abs() < 1e-9 * step {
            *last = stop;
        }
    }
    Ok(values)
}

pub fn parse(text: &str) -> Result<Scenario, ParseError> {
    let mut entries: HashMap<&'static str, Entry> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let known = KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| at(line, format!("unknown key `{key}`")))?;
        if let Some(prev) = entries.get(known) {
            return Err(at(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        entries.insert(known, Entry { line, value: value.trim().to_string() });
    }

    let model_entry = entries
        .get("model")
        .ok_or_else(|| ParseError { line: None, message: "missing required key `model`".into() })?;
    let model = parse_model(model_entry, &entries)?;

    let value_entry = entries
        .get("value")
        .ok_or_else(|| ParseError { line: None, message: "missing required key `value`".into() })?;
    let value = number(value_entry, "value")?;
    if value <= 0.0 {
        return Err(at(value_entry.line, "`value` must be positive"));
    }

    let dist = parse_distribution(&entries)?;

    let positive_list = |key: &str, allow_zero: bool| -> Result<Option<Vec<f64>>, ParseError> {
        let Some(e) = entries.get(key) else { return Ok(None) };
        let v = list(e, key)?;
        if v.iter().any(|&c| c < 0.0 || (!allow_zero && c == 0.0)) {
            return Err(at(e.line, format!("`{key}` entries must be {}", if allow_zero { ">= 0" } else { "positive" })));
        }
        Ok(Some(v))
    };
    let capacities = positive_list("capacities", false)?;
    let split = positive_list("split", true)?;
    let scalar = |key: &str, positive: bool| -> Result<Option<f64>, ParseError> {
        let Some(e) = entries.get(key) else { return Ok(None) };
        let v = number(e, key)?;
        if v < 0.0 || (positive && v == 0.0) {
            return Err(at(e.line, format!("`{key}` must be {}", if positive { "positive" } else { ">= 0" })));
        }
        Ok(Some(v))
    };
    let capacity_i = scalar("capacity_i", true)?;
    let capacity_ii = scalar("capacity_ii", false)?;
    let delta = scalar("delta", true)?;
    let tol = scalar("tol", true)?;

    let modes = match entries.get("modes") {
        None => vec![ResponseMode::OneClass, ResponseMode::TwoClass],
        Some(e) => {
            let mut modes = Vec::new();
            for m in e.value.split(',').map(str::trim) {
                let mode = match m {
                    "one_class" => ResponseMode::OneClass,
                    "two_class" => ResponseMode::TwoClass,
                    _ => return Err(at(e.line, format!("unknown mode `{m}` (expected one_class, two_class)"))),
                };
                if !modes.contains(&mode) {
                    modes.push(mode);
                }
            }
            modes
        }
    };

    let a_grid = match entries.get("a_grid") {
        None => None,
        Some(e) => {
            let g = grid(e, "a_grid")?;
            if let Some(a) = g.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(at(e.line, format!("`a_grid` value {a} outside [0, 1]")));
            }
            Some(g)
        }
    };
    let p_grid = match entries.get("p_grid") {
        None => None,
        Some(e) => Some(
            e.value
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 2)
                .ok_or_else(|| at(e.line, "`p_grid` must be an integer >= 2"))?,
        ),
    };
    let prices = match entries.get("prices") {
        None => None,
        Some(e) => {
            let v = list(e, "prices")?;
            if let Some(p) = v.iter().find(|p| !(0.0..=value).contains(*p)) {
                return Err(at(e.line, format!("price {p} outside [0, value]")));
            }
            Some(v)
        }
    };

    Ok(Scenario {
        model,
        value,
        dist,
        capacities,
        split,
        capacity_i,
        capacity_ii,
        modes,
        a_grid,
        p_grid,
        prices,
        delta,
        tol,
    })
}

fn parse_model(e: &Entry, entries: &HashMap<&'static str, Entry>) -> Result<CongestionModel, ParseError> {
    let param = match e.value.as_str() {
        "utilization" | "latency" => None,
        "general_latency" => Some("service_cv2"),
        "loss" => Some("queue_len"),
        "outage" => Some("failure_factor"),
        "utilization_default" => Some("default_use"),
        other => {
            return Err(at(
                e.line,
                format!(
                    "unknown model `{other}` (expected utilization, latency, general_latency, loss, outage, utilization_default)"
                ),
            ))
        }
    };
    for key in ["service_cv2", "queue_len", "failure_factor", "default_use"] {
        if Some(key) != param {
            if let Some(p) = entries.get(key) {
                return Err(at(p.line, format!("`{key}` does not apply to model `{}`", e.value)));
            }
        }
    }
    let Some(key) = param else {
        return Ok(if e.value == "latency" { CongestionModel::Latency } else { CongestionModel::Utilization });
    };
    let p = entries
        .get(key)
        .ok_or_else(|| at(e.line, format!("model `{}` needs `{key}`", e.value)))?;
    let built = match key {
        "queue_len" => {
            let k: u32 = p.value.parse().map_err(|_| at(p.line, "`queue_len` must be a positive integer"))?;
            CongestionModel::loss(k)
        }
        "service_cv2" => CongestionModel::general_latency(number(p, key)?),
        "failure_factor" => CongestionModel::outage(number(p, key)?),
        _ => CongestionModel::utilization_default(number(p, key)?),
    };
    built.map_err(|err| at(p.line, err.to_string()))
}

fn parse_distribution(entries: &HashMap<&'static str, Entry>) -> Result<TypeDistribution, ParseError> {
    let kind = entries.get("distribution");
    let kind_name = kind.map_or("uniform", |e| e.value.as_str());
    match kind_name {
        "uniform" => {
            if let Some(p) = entries.get("cdf_points") {
                return Err(at(p.line, "`cdf_points` needs `distribution = tabulated`"));
            }
            match entries.get("theta_bar") {
                None => Ok(TypeDistribution::default()),
                Some(e) => TypeDistribution::uniform(number(e, "theta_bar")?).map_err(|err| at(e.line, err.to_string())),
            }
        }
        "tabulated" => {
            let line = kind.map_or(0, |e| e.line);
            if let Some(t) = entries.get("theta_bar") {
                return Err(at(t.line, "`theta_bar` is set by the last breakpoint of a tabulated distribution"));
            }
            let e = entries
                .get("cdf_points")
                .ok_or_else(|| at(line, "tabulated distribution needs `cdf_points`"))?;
            let mut points = Vec::new();
            for pair in e.value.split(',') {
                let (t, f) = pair
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| at(e.line, format!("breakpoint `{}` must be theta:F", pair.trim())))?;
                let num = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| at(e.line, format!("`{}` is not a number", s.trim())))
                };
                points.push((num(t)?, num(f)?));
            }
            TypeDistribution::tabulated(points).map_err(|err| at(e.line, err.to_string()))
        }
        other => Err(at(
            kind.map_or(0, |e| e.line),
            format!("unknown distribution `{other}` (expected uniform, tabulated)"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file() {
        let s = parse(
            "# latency study\nmodel = loss\nqueue_len = 2\nvalue = 2\ncapacities = 0.3, 0.7 # two classes\n\
             a_grid = 0:0.25:1\ndistribution = tabulated\ncdf_points = 0:0, 0.5:0.8, 1:1\nmodes = two_class\n",
        )
        .unwrap();
        assert_eq!(s.model, CongestionModel::loss(2).unwrap());
        assert_eq!(s.capacities, Some(vec![0.3, 0.7]));
        assert_eq!(s.a_grid, Some(vec![0.0, 0.25, 0.5, 0.75, 1.0]));
        assert_eq!(s.modes, vec![ResponseMode::TwoClass]);
        assert!((s.dist.cdf(0.25).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn range_hits_endpoint() {
        let s = parse("model = utilization\nvalue = 2\na_grid = 0:0.05:1\n").unwrap();
        let g = s.a_grid.unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[20], 1.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("model = utilization\nvalue = 2\ncolour = red\n", 3),
            ("model = utilization\nvalue = two\n", 2),
            ("model = latency\nqueue_len = 3\nvalue = 2\n", 2),
            ("model = utilization\nvalue = 2\nvalue = 3\n", 3),
            ("model = utilization\nvalue = 2\na_grid =\n", 3),
            ("model = utilization\nvalue = 2\njust text\n", 3),
            ("model = outage\nfailure_factor = 1.5\nvalue = 2\n", 2),
        ];
        for (text, line) in cases {
            let err = parse(text).unwrap_err();
            assert_eq!(err.line, Some(line), "{text:?}: {err}");
        }
        assert_eq!(parse("value = 2\n").unwrap_err().line, None);
    }
}
