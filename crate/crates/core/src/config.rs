//! Experiment configuration: a flat TOML file of dotted keys.
//!
//! Every key is listed in [`KEYS`] with its type, default and meaning. Unknown
//! keys, wrong types and out-of-range values are errors naming the key.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::env::{BooleanConfig, ConeMode, EnvConfig, InterarrivalLaw, RadiusLaw, RenewalConfig};
use crate::error::{Error, Result};
use crate::lattice::Dim;
use crate::walk::JumpKernel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Str,
    IntList,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    IntList(Vec<i64>),
}

impl Value {
    fn to_toml(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Float(v) => {
                // Keep a decimal point so the value reads back as a float.
                let s = format!("{v:?}");
                if s.contains(['.', 'e', 'E', 'n', 'i']) {
                    s
                } else {
                    format!("{s}.0")
                }
            }
            Value::Str(s) => toml::Value::String(s.clone()).to_string(),
            Value::IntList(v) => format!(
                "[{}]",
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        }
    }
}

pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    /// None: required (or optional when `optional` is set).
    pub default: Option<&'static str>,
    pub optional: bool,
    pub help: &'static str,
}

const fn key(key: &'static str, kind: Kind, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec {
        key,
        kind,
        default: Some(default),
        optional: false,
        help,
    }
}

pub const KEYS: &[KeySpec] = &[
    KeySpec {
        key: "env",
        kind: Kind::Str,
        default: None,
        optional: false,
        help: "environment family: boolean | renewal",
    },
    key("dim", Kind::Int, "1", "spatial dimension d, 1..=3"),
    key("seed", Kind::Int, "1", "master seed (non-negative)"),
    key(
        "command",
        Kind::Str,
        "\"\"",
        "subcommand run by `rwre suite`",
    ),
    key("kernel.name", Kind::Str, "\"drift\"", "drift | lazy"),
    KeySpec {
        key: "kernel.kappa",
        kind: Kind::Float,
        default: None,
        optional: false,
        help: "ellipticity constant kappa > 0",
    },
    key("kernel.R", Kind::Int, "1", "range R >= 1"),
    key(
        "boolean.lambda",
        Kind::Float,
        "0.3",
        "Poisson intensity of ball centres",
    ),
    key(
        "boolean.radius_law",
        Kind::Str,
        "\"pareto\"",
        "pareto | deterministic",
    ),
    key(
        "boolean.beta",
        Kind::Float,
        "4.0",
        "Pareto tail exponent, > d + 1",
    ),
    key(
        "boolean.rho0",
        Kind::Float,
        "0.5",
        "Pareto scale, or the radius of the deterministic law",
    ),
    KeySpec {
        key: "boolean.rho_max",
        kind: Kind::Float,
        default: None,
        optional: true,
        help: "radius cap (default: survival 1e-9)",
    },
    key("boolean.trunc_s", Kind::Int, "16", "truncation s of eta^s"),
    key(
        "boolean.cone_mode",
        Kind::Str,
        "\"discrete\"",
        "discrete | continuous",
    ),
    key(
        "renewal.mu",
        Kind::Str,
        "\"geometric:0.5\"",
        "geometric:Q | dirac:K | uniform:A:B | pmf:P0,P1,...",
    ),
    KeySpec {
        key: "renewal.moment_order",
        kind: Kind::Float,
        default: None,
        optional: true,
        help: "moment order assumed for geometric mu (default 5)",
    },
    key("renewal.trunc_s", Kind::Int, "32", "truncation s of eta^s"),
    key(
        "renewal.K0",
        Kind::Int,
        "32",
        "initial backward depth of the coupling from the past",
    ),
    key(
        "renewal.K_max",
        Kind::Int,
        "1048576",
        "largest backward depth before censoring",
    ),
    key(
        "renewal.confirmations",
        Kind::Int,
        "2",
        "doublings the value must survive unchanged",
    ),
    key(
        "renewal.horizon",
        Kind::Int,
        "1048576",
        "scan horizon of the stopping times T^x",
    ),
    key(
        "experiment.n",
        Kind::Int,
        "2000",
        "samples: blocks, realizations or Monte Carlo draws",
    ),
    key(
        "experiment.horizon",
        Kind::Int,
        "100000",
        "block horizon before censoring",
    ),
    key(
        "experiment.floor",
        Kind::Float,
        "0.0001",
        "smallest acceptable P(eta_0 = 1)",
    ),
    key("experiment.n_boot", Kind::Int, "500", "bootstrap resamples"),
    key(
        "experiment.runs",
        Kind::Int,
        "50",
        "direct runs for the speed cross-check",
    ),
    key(
        "experiment.t_final",
        Kind::Int,
        "10000",
        "length of direct runs for the speed",
    ),
    key(
        "experiment.clt_runs",
        Kind::Int,
        "200",
        "direct runs for the Gaussian check",
    ),
    key(
        "experiment.clt_t",
        Kind::Int,
        "2000",
        "length of direct runs for the Gaussian check",
    ),
    key(
        "experiment.k_min",
        Kind::Int,
        "1",
        "smallest scale k (L_k = 4^k)",
    ),
    key("experiment.k_max", Kind::Int, "4", "largest scale k"),
    key("experiment.J", Kind::Int, "4", "number of H-blocks in M_J"),
    key(
        "experiment.H",
        Kind::Int,
        "4",
        "threat height H (akh: 0 means floor(L_k / k^2))",
    ),
    key(
        "experiment.walks",
        Kind::Int,
        "1000",
        "walks per realization",
    ),
    key(
        "experiment.box_L",
        Kind::Int,
        "16",
        "side of the threatened-box check",
    ),
    key(
        "experiment.s_values",
        Kind::IntList,
        "[8, 16, 32, 64]",
        "truncation levels s",
    ),
    key(
        "experiment.pairs",
        Kind::Int,
        "50",
        "random pairs in a battery",
    ),
    key(
        "experiment.required",
        Kind::Int,
        "47",
        "passing pairs needed in the decoupling battery",
    ),
    key("experiment.r_ref", Kind::Int, "4", "reference box diameter"),
    key("experiment.h_ref", Kind::Int, "4", "reference box height"),
    key(
        "experiment.s_ref",
        Kind::Int,
        "4",
        "reference and smallest separation",
    ),
    key("experiment.s_max", Kind::Int, "32", "largest separation"),
    key(
        "experiment.depth",
        Kind::Int,
        "8",
        "time depth of the RMP cone windows",
    ),
    key(
        "experiment.control_n",
        Kind::Int,
        "10000",
        "samples per positive-control test",
    ),
    key(
        "experiment.control_reps",
        Kind::Int,
        "20",
        "positive-control repetitions",
    ),
];

fn spec(k: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|s| s.key == k)
}

fn convert(key: &str, kind: Kind, v: &toml::Value) -> Result<Value> {
    let wrong = || Error::config(key, format!("expected {kind:?}, got `{v}`"));
    Ok(match (kind, v) {
        (Kind::Int, toml::Value::Integer(i)) => Value::Int(*i),
        (Kind::Float, toml::Value::Float(f)) => Value::Float(*f),
        (Kind::Float, toml::Value::Integer(i)) => Value::Float(*i as f64),
        (Kind::Str, toml::Value::String(s)) => Value::Str(s.clone()),
        (Kind::IntList, toml::Value::Array(a)) => Value::IntList(
            a.iter()
                .map(|x| x.as_integer().ok_or_else(wrong))
                .collect::<Result<_>>()?,
        ),
        _ => return Err(wrong()),
    })
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let full = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&full, t, out),
            _ => {
                out.insert(full, v.clone());
            }
        }
    }
}

/// A validated configuration. Holds every key, defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    values: BTreeMap<String, Value>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        let mut values = BTreeMap::new();
        for (k, v) in &flat {
            let s = spec(k).ok_or_else(|| Error::config(k.clone(), "unknown key"))?;
            values.insert(k.clone(), convert(k, s.kind, v)?);
        }
        let mut cfg = ExperimentConfig { values };
        cfg.fill_defaults()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn fill_defaults(&mut self) -> Result<()> {
        let other = match self.values.get("env") {
            Some(Value::Str(f)) if f == "renewal" => "boolean.",
            _ => "renewal.",
        };
        for s in KEYS {
            if self.values.contains_key(s.key) || s.key.starts_with(other) {
                continue;
            }
            match s.default {
                Some(d) => {
                    let v: toml::Value = format!("v = {d}")
                        .parse::<toml::Table>()
                        .expect("valid default")["v"]
                        .clone();
                    self.values
                        .insert(s.key.into(), convert(s.key, s.kind, &v)?);
                }
                None if s.optional => {}
                None => return Err(Error::config(s.key, "required key is missing")),
            }
        }
        Ok(())
    }

    /// Apply a `key=value` override, value in TOML syntax (bare words are
    /// taken as strings).
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must be KEY=VALUE"))?;
        let k = k.trim();
        let s = spec(k).ok_or_else(|| Error::config(k, "unknown key"))?;
        let parsed = match format!("v = {}", v.trim()).parse::<toml::Table>() {
            Ok(t) => t["v"].clone(),
            Err(_) => toml::Value::String(v.trim().to_string()),
        };
        self.values.insert(k.into(), convert(k, s.kind, &parsed)?);
        self.validate()
    }

    /// Canonical text: every key, sorted, one per line.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {}", v.to_toml());
        }
        s
    }

    pub fn values(&self) -> &BTreeMap<String, Value> {
        &self.values
    }

    pub fn int(&self, k: &str) -> i64 {
        match self.values.get(k) {
            Some(Value::Int(v)) => *v,
            other => panic!("config key {k} is not an integer: {other:?}"),
        }
    }

    /// Non-negative integer.
    pub fn count(&self, k: &str) -> u64 {
        self.int(k).max(0) as u64
    }

    pub fn float(&self, k: &str) -> f64 {
        match self.values.get(k) {
            Some(Value::Float(v)) => *v,
            other => panic!("config key {k} is not a float: {other:?}"),
        }
    }

    pub fn opt_float(&self, k: &str) -> Option<f64> {
        match self.values.get(k) {
            Some(Value::Float(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn str(&self, k: &str) -> &str {
        match self.values.get(k) {
            Some(Value::Str(v)) => v,
            other => panic!("config key {k} is not a string: {other:?}"),
        }
    }

    pub fn int_list(&self, k: &str) -> &[i64] {
        match self.values.get(k) {
            Some(Value::IntList(v)) => v,
            other => panic!("config key {k} is not a list: {other:?}"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.int("seed") as u64
    }

    fn validate(&self) -> Result<()> {
        let family = self.str("env");
        if family != "boolean" && family != "renewal" {
            return Err(Error::config("env", "must be `boolean` or `renewal`"));
        }
        // Keys of the other family are a mistake, not a no-op.
        let other = if family == "boolean" {
            "renewal."
        } else {
            "boolean."
        };
        if let Some(k) = self.values.keys().find(|k| k.starts_with(other)) {
            return Err(Error::config(
                k.clone(),
                format!("key does not apply to env = {family}"),
            ));
        }
        let pos = |k: &str| -> Result<()> {
            if self.int(k) < 1 {
                return Err(Error::config(k, "must be at least 1"));
            }
            Ok(())
        };
        for k in [
            "kernel.R",
            "experiment.n",
            "experiment.horizon",
            "experiment.runs",
            "experiment.t_final",
            "experiment.clt_runs",
            "experiment.clt_t",
            "experiment.J",
            "experiment.walks",
            "experiment.box_L",
            "experiment.pairs",
            "experiment.s_ref",
            "experiment.depth",
            "experiment.control_n",
            "experiment.control_reps",
            "experiment.k_max",
        ] {
            pos(k)?;
        }
        if !(1..=3).contains(&self.int("dim")) {
            return Err(Error::config("dim", "must be 1, 2 or 3"));
        }
        if self.int("seed") < 0 {
            return Err(Error::config("seed", "must be non-negative"));
        }
        if self.int("kernel.R") > 8 {
            return Err(Error::config("kernel.R", "must be at most 8"));
        }
        let kappa = self.float("kernel.kappa");
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::config("kernel.kappa", "must lie in (0, 1)"));
        }
        if !matches!(self.str("kernel.name"), "drift" | "lazy") {
            return Err(Error::config("kernel.name", "must be `drift` or `lazy`"));
        }
        if self.int("experiment.H") < 0 {
            return Err(Error::config("experiment.H", "must be non-negative"));
        }
        let f = self.float("experiment.floor");
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::config("experiment.floor", "must lie in (0, 1]"));
        }
        if self.int("experiment.k_min") < 0
            || self.int("experiment.k_min") > self.int("experiment.k_max")
            || self.int("experiment.k_max") > 8
        {
            return Err(Error::config(
                "experiment.k_max",
                "need 0 <= k_min <= k_max <= 8",
            ));
        }
        if self.int("experiment.s_max") < self.int("experiment.s_ref") {
            return Err(Error::config(
                "experiment.s_max",
                "must be at least experiment.s_ref",
            ));
        }
        if self.int_list("experiment.s_values").iter().any(|&s| s < 1) {
            return Err(Error::config(
                "experiment.s_values",
                "entries must be at least 1",
            ));
        }
        if !matches!(
            self.str("command"),
            "" | "blocks"
                | "simulate"
                | "renorm"
                | "mj"
                | "akh"
                | "decouple"
                | "rmp-test"
                | "qk"
                | "truncation"
                | "stationarity"
        ) {
            return Err(Error::config("command", "unknown subcommand"));
        }
        // Building the models runs the family-specific range checks.
        self.env_config()?.model()?;
        self.kernel()?;
        Ok(())
    }

    pub fn dim(&self) -> Dim {
        Dim::new(self.int("dim") as usize).expect("validated")
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let dim = self.dim();
        let range = self.int("kernel.R") as u32;
        Ok(match self.str("env") {
            "boolean" => {
                let rho0 = self.float("boolean.rho0");
                let radius_law = match self.str("boolean.radius_law") {
                    "pareto" => RadiusLaw::Pareto {
                        rho0,
                        beta: self.float("boolean.beta"),
                    },
                    "deterministic" => RadiusLaw::Deterministic { rho: rho0 },
                    _ => {
                        return Err(Error::config(
                            "boolean.radius_law",
                            "must be `pareto` or `deterministic`",
                        ))
                    }
                };
                let cone_mode = match self.str("boolean.cone_mode") {
                    "discrete" => ConeMode::Discrete,
                    "continuous" => ConeMode::Continuous,
                    _ => {
                        return Err(Error::config(
                            "boolean.cone_mode",
                            "must be `discrete` or `continuous`",
                        ))
                    }
                };
                EnvConfig::Boolean(BooleanConfig {
                    dim,
                    range,
                    lambda: self.float("boolean.lambda"),
                    radius_law,
                    trunc_s: self.positive("boolean.trunc_s")?,
                    rho_max: self.opt_float("boolean.rho_max"),
                    cone_mode,
                })
            }
            _ => {
                let mut mu: InterarrivalLaw = self.str("renewal.mu").parse()?;
                if let Some(m) = self.opt_float("renewal.moment_order") {
                    mu = mu
                        .with_moment_order(m)
                        .map_err(|e| Error::config("renewal.moment_order", e.to_string()))?;
                }
                EnvConfig::Renewal(RenewalConfig {
                    dim,
                    range,
                    mu,
                    trunc_s: self.positive("renewal.trunc_s")?,
                    k0: self.positive("renewal.K0")?,
                    k_max: self.positive("renewal.K_max")?,
                    confirmations: self.positive("renewal.confirmations")? as u32,
                    horizon: self.positive("renewal.horizon")?,
                })
            }
        })
    }

    fn positive(&self, k: &str) -> Result<u64> {
        let v = self.int(k);
        if v < 1 {
            return Err(Error::config(k, "must be at least 1"));
        }
        Ok(v as u64)
    }

    pub fn kernel(&self) -> Result<JumpKernel> {
        let dim = self.dim();
        let range = self.int("kernel.R") as u32;
        let kappa = self.float("kernel.kappa");
        match self.str("kernel.name") {
            "lazy" => JumpKernel::lazy(dim, range, kappa),
            _ => JumpKernel::drift(dim, range, kappa),
        }
    }
}

/// Table of keys for `--help`.
pub fn key_help() -> String {
    let mut s = String::new();
    for k in KEYS {
        let d = match (k.default, k.optional) {
            (Some(d), _) => format!("default {d}"),
            (None, true) => "optional".into(),
            (None, false) => "required".into(),
        };
        let _ = writeln!(s, "  {:<26} {} ({d})", k.key, k.help);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MIN: &str = "env = \"boolean\"\nkernel.kappa = 0.1\n";

    #[test]
    fn defaults_are_filled() {
        let c = ExperimentConfig::parse(MIN).unwrap();
        assert_eq!(c.int("dim"), 1);
        assert_eq!(c.int_list("experiment.s_values"), &[8, 16, 32, 64]);
        assert!(matches!(c.env_config().unwrap(), EnvConfig::Boolean(_)));
    }

    #[test]
    fn missing_kappa_names_the_key() {
        let e = ExperimentConfig::parse("env = \"boolean\"\n").unwrap_err();
        assert!(
            matches!(&e, Error::Config { key, .. } if key == "kernel.kappa"),
            "{e}"
        );
    }

    #[test]
    fn bad_keys_and_values() {
        for (text, k) in [
            ("env = \"boolean\"\nkernel.kappa = 0.1\nfoo = 1\n", "foo"),
            ("env = \"boolean\"\nkernel.kappa = 0.5\n", "kernel.kappa"),
            (
                "env = \"boolean\"\nkernel.kappa = 0.1\nboolean.beta = 1.5\n",
                "boolean.beta",
            ),
            (
                "env = \"boolean\"\nkernel.kappa = 0.1\nrenewal.K0 = 7\n",
                "renewal.K0",
            ),
            (
                "env = \"renewal\"\nkernel.kappa = 0.1\nrenewal.mu = \"nope:1\"\n",
                "renewal.mu",
            ),
            ("env = \"boolean\"\nkernel.kappa = \"x\"\n", "kernel.kappa"),
            ("env = \"x\"\nkernel.kappa = 0.1\n", "env"),
        ] {
            match ExperimentConfig::parse(text) {
                Err(Error::Config { key, .. }) => assert_eq!(key, k, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn nested_tables_are_flattened() {
        let c = ExperimentConfig::parse(
            "env = \"renewal\"\n[kernel]\nkappa = 0.2\nR = 2\n[renewal]\nmu = \"uniform:0:3\"\n",
        )
        .unwrap();
        assert_eq!(c.int("kernel.R"), 2);
        assert_eq!(c.str("renewal.mu"), "uniform:0:3");
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::parse(MIN).unwrap();
        c.set("experiment.n=17").unwrap();
        c.set("kernel.name=lazy").unwrap();
        assert_eq!(c.int("experiment.n"), 17);
        assert_eq!(c.kernel().unwrap().name(), "lazy");
        assert!(c.set("kernel.kappa=2").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            renewal in any::<bool>(),
            kappa in 0.01f64..0.3,
            n in 1i64..100_000,
            lambda in 0.01f64..2.0,
            s_values in proptest::collection::vec(1i64..1000, 0..6),
            rho_max in proptest::option::of(2.0f64..100.0),
        ) {
            let mut text = format!("env = \"{}\"\nkernel.kappa = {kappa:?}\nexperiment.n = {n}\nexperiment.s_values = {s_values:?}\n",
                if renewal { "renewal" } else { "boolean" });
            if !renewal {
                text += &format!("boolean.lambda = {lambda:?}\n");
                if let Some(r) = rho_max { text += &format!("boolean.rho_max = {r:?}\n"); }
            }
            let c = ExperimentConfig::parse(&text).unwrap();
            let again = ExperimentConfig::parse(&c.to_toml()).unwrap();
            prop_assert_eq!(&c, &again);
            prop_assert_eq!(c.to_toml(), again.to_toml());
        }
    }
}
