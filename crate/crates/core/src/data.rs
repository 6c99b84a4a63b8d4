//! Reading and writing survival datasets as comma-separated text, and a
//! seeded simulator for synthetic mixture cure data.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gibbs::Profile;
use crate::model::{logistic, Dataset, LatencyFamily, ParameterPoint, INTERCEPT};
use crate::numerics::gauss_legendre;

/// Column roles for reading a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    pub time_col: String,
    pub status_col: String,
    pub incidence: Vec<String>,
    pub latency: Vec<String>,
    /// Covariates centered on their sample mean.
    pub center: Vec<String>,
    /// Read the status column as 1 = censored, 0 = event.
    pub flip_status: bool,
}

impl Schema {
    pub fn new(time_col: &str, status_col: &str) -> Self {
        Self {
            time_col: time_col.into(),
            status_col: status_col.into(),
            ..Self::default()
        }
    }

    /// Covariates in order of first mention (incidence first).
    fn covariates(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in self.incidence.iter().chain(&self.latency) {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }
}

fn row_error(row: usize, message: String) -> Error {
    Error::Parse { row, message }
}

pub fn read_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open `{}`: {e}", path.display())))?;
    parse_dataset(file, schema)
}

/// Parse comma-separated text with one header row. Row numbers in errors
/// count data rows from 1, excluding the header.
pub fn parse_dataset<R: Read>(input: R, schema: &Schema) -> Result<Dataset> {
    for c in &schema.center {
        if !schema.incidence.contains(c) && !schema.latency.contains(c) {
            return Err(Error::Config(format!("centered column `{c}` is not a covariate")));
        }
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column `{name}` not found in header")))
    };
    let t_idx = find(&schema.time_col)?;
    let s_idx = find(&schema.status_col)?;
    let covs = schema.covariates();
    let cov_idx = covs.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); covs.len()];
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| row_error(row, e.to_string()))?;
        let field = |idx: usize, name: &str| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                return Err(row_error(row, format!("missing value in column `{name}`")));
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| row_error(row, format!("non-numeric value `{raw}` in column `{name}`")))?;
            if !v.is_finite() {
                return Err(row_error(row, format!("non-finite value `{raw}` in column `{name}`")));
            }
            Ok(v)
        };
        let t = field(t_idx, &schema.time_col)?;
        if t <= 0.0 {
            return Err(row_error(row, format!("time must be positive, got {t}")));
        }
        let s = field(s_idx, &schema.status_col)?;
        let event = match (s, schema.flip_status) {
            (v, false) if v == 1.0 => true,
            (v, false) if v == 0.0 => false,
            (v, true) if v == 0.0 => true,
            (v, true) if v == 1.0 => false,
            _ => return Err(row_error(row, format!("status must be 0 or 1, got {s}"))),
        };
        times.push(t);
        events.push(event);
        for (j, &idx) in cov_idx.iter().enumerate() {
            cols[j].push(field(idx, &covs[j])?);
        }
    }
    if times.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let raw: Vec<(String, Vec<f64>)> = covs.iter().cloned().zip(cols).collect();
    build_dataset(times, events, raw, &schema.incidence, &schema.latency, &schema.center)
}

/// Assemble designs (intercept first) from raw covariate columns.
pub fn build_dataset(
    times: Vec<f64>,
    events: Vec<bool>,
    raw: Vec<(String, Vec<f64>)>,
    incidence: &[String],
    latency: &[String],
    center: &[String],
) -> Result<Dataset> {
    let n = times.len();
    let lookup: HashMap<&str, &Vec<f64>> = raw.iter().map(|(k, v)| (k.as_str(), v)).collect();
    let mut centering = Vec::new();
    for c in center {
        let col = lookup
            .get(c.as_str())
            .ok_or_else(|| Error::Config(format!("centered column `{c}` is not a covariate")))?;
        centering.push((c.clone(), col.iter().sum::<f64>() / n as f64));
    }
    let shift = |name: &str| centering.iter().find(|(c, _)| c == name).map_or(0.0, |(_, m)| *m);
    let design = |names: &[String]| -> Result<(DMatrix<f64>, Vec<String>)> {
        let mut m = DMatrix::from_element(n, names.len() + 1, 1.0);
        for (j, name) in names.iter().enumerate() {
            let col = lookup
                .get(name.as_str())
                .ok_or_else(|| Error::Data(format!("covariate `{name}` missing")))?;
            let s = shift(name);
            for i in 0..n {
                m[(i, j + 1)] = col[i] - s;
            }
        }
        let mut labels = vec![INTERCEPT.to_string()];
        labels.extend(names.iter().cloned());
        Ok((m, labels))
    };
    let (x_inc, inc_names) = design(incidence)?;
    let (x_lat, lat_names) = design(latency)?;
    let mut d = Dataset::new(times, events, x_inc, x_lat, inc_names, lat_names)?;
    d.raw_covariates = raw;
    d.centering = centering;
    Ok(d)
}

/// Write time, status (1 = event) and the raw covariate columns.
pub fn write_dataset<W: Write>(d: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string(), "status".to_string()];
    header.extend(d.raw_covariates().iter().map(|(k, _)| k.clone()));
    w.write_record(&header)?;
    for i in 0..d.n() {
        let mut rec = vec![format!("{}", d.times()[i]), if d.events()[i] { "1" } else { "0" }.to_string()];
        rec.extend(d.raw_covariates().iter().map(|(_, v)| format!("{}", v[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_dataset(d, std::io::BufWriter::new(f))
}

/// Build a profile from raw covariate values; covariates not given take
/// their reference value (0, or the sample mean for centered columns).
pub fn make_profile(d: &Dataset, name: &str, values: &[(String, f64)]) -> Result<Profile> {
    let known: Vec<&str> = d.raw_covariates().iter().map(|(k, _)| k.as_str()).collect();
    for (k, _) in values {
        if !known.contains(&k.as_str()) {
            return Err(Error::Config(format!("profile `{name}` names unknown covariate `{k}`")));
        }
    }
    let centered = |k: &str| d.centering().iter().find(|(c, _)| c == k).map(|(_, m)| *m);
    let value = |k: &str| match values.iter().find(|(c, _)| c == k) {
        Some((_, v)) => v - centered(k).unwrap_or(0.0),
        None => 0.0,
    };
    let row = |names: &[String]| {
        names
            .iter()
            .map(|nm| if nm == INTERCEPT { 1.0 } else { value(nm) })
            .collect::<Vec<f64>>()
    };
    Ok(Profile {
        name: name.into(),
        x_inc: row(d.inc_names()),
        x_lat: row(d.lat_names()),
    })
}

/// One profile per combination of the 0/1-valued covariates (at most
/// `max_binary` of them, in column order); other covariates at reference.
pub fn default_profiles(d: &Dataset, max_binary: usize) -> Result<Vec<Profile>> {
    let binary: Vec<&str> = d
        .raw_covariates()
        .iter()
        .filter(|(_, v)| v.iter().all(|x| *x == 0.0 || *x == 1.0))
        .map(|(k, _)| k.as_str())
        .take(max_binary)
        .collect();
    if binary.is_empty() {
        return Ok(vec![make_profile(d, "baseline", &[])?]);
    }
    (0..1usize << binary.len())
        .map(|mask| {
            let values: Vec<(String, f64)> = binary
                .iter()
                .enumerate()
                .map(|(b, k)| (k.to_string(), (mask >> b & 1) as f64))
                .collect();
            let name = values
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";");
            make_profile(d, &name, &values)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateGen {
    Bernoulli { p: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl CovariateGen {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            CovariateGen::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
            CovariateGen::Normal { mean, sd } => {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                mean + sd * z
            }
            CovariateGen::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CovariateGen::Bernoulli { p } => format!("bernoulli({p})"),
            CovariateGen::Normal { mean, sd } => format!("normal({mean},{sd})"),
            CovariateGen::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
        }
    }
}

impl std::str::FromStr for CovariateGen {
    type Err = Error;

    /// `bernoulli:P`, `normal:MEAN:SD` or `uniform:LO:HI`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |k: usize| -> Result<f64> {
            parts
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Config(format!("bad covariate generator `{s}`")))
        };
        let gen = match parts[0] {
            "bernoulli" if parts.len() == 2 => CovariateGen::Bernoulli { p: num(1)? },
            "normal" if parts.len() == 3 => CovariateGen::Normal { mean: num(1)?, sd: num(2)? },
            "uniform" if parts.len() == 3 => CovariateGen::Uniform { lo: num(1)?, hi: num(2)? },
            _ => return Err(Error::Config(format!("bad covariate generator `{s}`"))),
        };
        match gen {
            CovariateGen::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                Err(Error::Config(format!("bernoulli probability {p} outside [0, 1]")))
            }
            CovariateGen::Normal { sd, .. } if !(sd >= 0.0) => Err(Error::Config("normal sd must be >= 0".into())),
            CovariateGen::Uniform { lo, hi } if !(hi >= lo) => Err(Error::Config("uniform needs lo <= hi".into())),
            g => Ok(g),
        }
    }
}

/// Censoring time `C = min(admin, Exp(rate))`; either part may be absent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Censoring {
    pub admin: Option<f64>,
    pub rate: Option<f64>,
}

impl Censoring {
    pub fn describe(&self) -> String {
        match (self.admin, self.rate) {
            (None, None) => "none".into(),
            (Some(c), None) => format!("administrative at {c}"),
            (None, Some(r)) => format!("exponential rate {r}"),
            (Some(c), Some(r)) => format!("min(administrative at {c}, exponential rate {r})"),
        }
    }

    /// `E[S(C)]` for a survival function `S` of the susceptible time.
    fn expected_survival(&self, s: impl Fn(f64) -> f64) -> f64 {
        match (self.admin, self.rate) {
            (None, None) => 0.0,
            (Some(c), None) => s(c),
            (admin, Some(r)) => {
                let upper = admin.unwrap_or(f64::INFINITY).min(60.0 / r);
                let (x, w) = gauss_legendre(64);
                let half = 0.5 * upper;
                let body: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(x, w)| {
                        let c = half * (x + 1.0);
                        w * half * r * (-r * c).exp() * s(c)
                    })
                    .sum();
                let tail = admin.map_or(0.0, |c| (-r * c).exp() * s(c));
                body + tail
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub n: usize,
    /// Covariates shared by the incidence and latency parts.
    pub covariates: Vec<(String, CovariateGen)>,
    /// Intercept first, then one coefficient per covariate.
    pub beta_inc: Vec<f64>,
    pub beta_lat: Vec<f64>,
    pub shape: f64,
    pub family: LatencyFamily,
    pub censoring: Censoring,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub params: ParameterPoint,
    pub cured: Vec<bool>,
    pub censoring: String,
    pub seed: u64,
}

pub fn simulate(spec: &SimSpec) -> Result<(Dataset, SimTruth)> {
    let k = spec.covariates.len();
    if spec.n < 1 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if !(spec.shape > 0.0 && spec.shape.is_finite()) {
        return Err(Error::Config("shape must be positive".into()));
    }
    if spec.beta_inc.len() != k + 1 || spec.beta_lat.len() != k + 1 {
        return Err(Error::Config(format!(
            "need {} incidence and {} latency coefficients (intercept first)",
            k + 1,
            k + 1
        )));
    }
    if spec.censoring.admin.is_some_and(|c| !(c > 0.0)) || spec.censoring.rate.is_some_and(|r| !(r > 0.0)) {
        return Err(Error::Config("censoring time and rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cols = vec![Vec::with_capacity(spec.n); k];
    let mut times = Vec::with_capacity(spec.n);
    let mut events = Vec::with_capacity(spec.n);
    let mut cured = Vec::with_capacity(spec.n);
    let mut expected_censored = 0.0;
    let lin = |b: &[f64], x: &[f64]| b[0] + b[1..].iter().zip(x).map(|(b, x)| b * x).sum::<f64>();
    for i in 0..spec.n {
        let x: Vec<f64> = spec.covariates.iter().map(|(_, g)| g.draw(&mut rng)).collect();
        let eta = logistic(lin(&spec.beta_inc, &x));
        let v = lin(&spec.beta_lat, &x);
        // fixed number of draws per subject keeps streams aligned
        let (u_cure, u_time, u_cens): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let is_cured = u_cure < eta;
        let t_star = (-(1.0 - u_time).ln() * (-v).exp()).powf(1.0 / spec.shape);
        let c_exp = spec.censoring.rate.map_or(f64::INFINITY, |r| -(1.0 - u_cens).ln() / r);
        let c = c_exp.min(spec.censoring.admin.unwrap_or(f64::INFINITY));
        expected_censored += eta
            + (1.0 - eta) * spec.censoring.expected_survival(|t| (-(t.powf(spec.shape)) * v.exp()).exp());
        let (t, event) = if is_cured {
            if !c.is_finite() {
                return Err(Error::Config(format!(
                    "subject {} is cured but censoring is never applied; add administrative or random censoring",
                    i + 1
                )));
            }
            (c, false)
        } else if t_star <= c {
            (t_star, true)
        } else {
            (c, false)
        };
        for (j, xv) in x.into_iter().enumerate() {
            cols[j].push(xv);
        }
        times.push(t);
        events.push(event);
        cured.push(is_cured);
    }
    if expected_censored < 1.0 {
        log::warn!(
            "expected number of censored subjects is {expected_censored:.3}; the cure fraction is not identifiable"
        );
    }
    let names: Vec<String> = spec.covariates.iter().map(|(k, _)| k.clone()).collect();
    let raw: Vec<(String, Vec<f64>)> = names.iter().cloned().zip(cols).collect();
    let d = build_dataset(times, events, raw, &names, &names, &[])?;
    let truth = SimTruth {
        params: ParameterPoint::new(spec.beta_inc.clone(), spec.beta_lat.clone(), spec.shape.ln()),
        cured,
        censoring: spec.censoring.describe(),
        seed: spec.seed,
    };
    Ok((d, truth))
}
