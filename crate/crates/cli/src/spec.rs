//! Experiment specifications.
//!
//! A spec file is TOML with one table per experiment. Sweepable keys
//! (`n`, `t`, `ell`, `fan_out`, `perturb_prob`) take a scalar or an
//! ascending list; the experiment runs the cartesian product of all lists.
//!
//! ```toml
//! [fig2a]
//! protocols = ["random", "ltree:64"]
//! n = [128, 256, 512]
//! t = 16
//! alpha = "fixed:17"
//! trials = 30
//! metrics = ["delay", "bounds"]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use diffusion_core::{AlphaRule, Behavior, Protocol};
use serde::{Deserialize, Serialize};

use crate::Error;

/// How a protocol is named in a spec; resolved against each sweep point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProtocolSpec {
    Fixed(Protocol),
    /// ℓ-Tree-Random with ℓ taken from the `ell` axis.
    LTreeAxis,
    /// ℓ-Tree-Random with ℓ = 4t.
    TreeRandom,
}

impl ProtocolSpec {
    pub fn resolve(&self, t: usize, ell: Option<usize>) -> Result<Protocol, Error> {
        match *self {
            ProtocolSpec::Fixed(p) => Ok(p),
            ProtocolSpec::TreeRandom => Ok(Protocol::tree_random(t)),
            ProtocolSpec::LTreeAxis => ell
                .map(|ell| Protocol::LTree { ell })
                .ok_or_else(|| Error::Config("protocol `ltree` needs an `ell` value".into())),
        }
    }
}

impl fmt::Display for ProtocolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolSpec::Fixed(p) => write!(f, "{p}"),
            ProtocolSpec::LTreeAxis => f.write_str("ltree"),
            ProtocolSpec::TreeRandom => f.write_str("tree_random"),
        }
    }
}

impl FromStr for ProtocolSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "ltree" => Ok(ProtocolSpec::LTreeAxis),
            "tree_random" => Ok(ProtocolSpec::TreeRandom),
            other => other.parse().map(ProtocolSpec::Fixed).map_err(|e| format!("{e}")),
        }
    }
}

impl TryFrom<String> for ProtocolSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<ProtocolSpec> for String {
    fn from(p: ProtocolSpec) -> String {
        p.to_string()
    }
}

/// A scalar or a list of sweep values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Axis<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Axis::One(v) => vec![v.clone()],
            Axis::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Delay,
    Fanin,
    ActiveSeries,
    Bounds,
}

/// Which replicas may fail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    #[serde(default = "default_behavior")]
    pub behavior: Behavior,
    /// Faulty replicas per trial; `t − 1` when absent.
    #[serde(default)]
    pub faulty: Option<usize>,
    /// Messages per spamming replica per round; `n` when absent.
    #[serde(default)]
    pub spam_budget: Option<usize>,
    /// `victim` (one per trial) or `scatter`.
    #[serde(default = "default_targeting")]
    pub targeting: String,
    #[serde(default = "yes")]
    pub knows_genuine: bool,
    /// Spurious updates introduced at round 0 when spamming.
    #[serde(default = "one")]
    pub spurious: u32,
}

fn default_behavior() -> Behavior {
    Behavior::Silent
}
fn default_targeting() -> String {
    "victim".into()
}
fn yes() -> bool {
    true
}
fn one() -> u32 {
    1
}

impl Default for AdversarySpec {
    fn default() -> Self {
        AdversarySpec {
            behavior: Behavior::Silent,
            faulty: None,
            spam_budget: None,
            targeting: default_targeting(),
            knows_genuine: true,
            spurious: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: String,
    pub protocols: Vec<ProtocolSpec>,
    pub n: Axis<usize>,
    pub t: Axis<usize>,
    #[serde(default)]
    pub ell: Option<Axis<usize>>,
    #[serde(default = "one_axis")]
    pub fan_out: Axis<usize>,
    #[serde(default = "zero_axis")]
    pub perturb_prob: Axis<f64>,
    #[serde(default = "half")]
    pub drop_fraction: f64,
    #[serde(default = "one_round")]
    pub max_delay: u64,
    pub alpha: AlphaRule,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// Round cap; derived from the counting bound when absent.
    #[serde(default)]
    pub max_rounds: Option<u64>,
    #[serde(default = "yes")]
    pub count_empty: bool,
}

fn one_axis() -> Axis<usize> {
    Axis::One(1)
}
fn zero_axis() -> Axis<f64> {
    Axis::One(0.0)
}
fn half() -> f64 {
    0.5
}
fn one_round() -> u64 {
    1
}
fn default_metrics() -> Vec<Metric> {
    vec![Metric::Delay, Metric::Bounds]
}

fn ascending<T: PartialOrd + fmt::Debug>(key: &str, a: &Axis<T>) -> Result<(), Error> {
    if let Axis::Many(v) = a {
        if v.is_empty() {
            return Err(Error::Config(format!("`{key}` has no values")));
        }
        if v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("`{key}` values must be strictly ascending: {v:?}")));
        }
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if self.trials < 1 {
            return Err(Error::Config(format!("{}: trials must be ≥ 1", self.name)));
        }
        if self.protocols.is_empty() {
            return Err(Error::Config(format!("{}: no protocols", self.name)));
        }
        ascending("n", &self.n)?;
        ascending("t", &self.t)?;
        ascending("fan_out", &self.fan_out)?;
        ascending("perturb_prob", &self.perturb_prob)?;
        if let Some(ell) = &self.ell {
            ascending("ell", ell)?;
        }
        if self.protocols.contains(&ProtocolSpec::LTreeAxis) && self.ell.is_none() {
            return Err(Error::Config(format!("{}: protocol `ltree` needs `ell`", self.name)));
        }
        if !matches!(self.adversary.targeting.as_str(), "victim" | "scatter") {
            return Err(Error::Config(format!(
                "{}: targeting must be `victim` or `scatter`, not `{}`",
                self.name, self.adversary.targeting
            )));
        }
        Ok(())
    }

    /// Sweep points in deterministic order: n, then t, ℓ, fan-out, perturbation.
    pub fn points(&self) -> Vec<Point> {
        let ells: Vec<Option<usize>> = match &self.ell {
            Some(a) => a.values().into_iter().map(Some).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for n in self.n.values() {
            for t in self.t.values() {
                for &ell in &ells {
                    for fan_out in self.fan_out.values() {
                        for perturb_prob in self.perturb_prob.values() {
                            out.push(Point { n, t, ell, fan_out, perturb_prob });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One combination of sweep values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Point {
    pub n: usize,
    pub t: usize,
    pub ell: Option<usize>,
    pub fan_out: usize,
    pub perturb_prob: f64,
}

/// Parses every experiment table of a spec file, in file order.
pub fn parse_specs(text: &str) -> Result<Vec<ExperimentSpec>, Error> {
    let tables: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::new();
    for (name, value) in tables {
        let mut spec: ExperimentSpec =
            value.try_into().map_err(|e: toml::de::Error| Error::Config(format!("[{name}] {e}")))?;
        spec.name = name;
        spec.validate()?;
        out.push(spec);
    }
    if out.is_empty() {
        return Err(Error::Config("spec file defines no experiments".into()));
    }
    Ok(out)
}

const POWERS_OF_TWO: [usize; 8] = [128, 256, 512, 1024, 2048, 4096, 8192, 16384];

/// Built-in experiments reproducing the published figures.
pub fn builtin(name: &str) -> Option<ExperimentSpec> {
    let fig2 = |alpha| ExperimentSpec {
        name: name.to_string(),
        protocols: vec![ProtocolSpec::Fixed(Protocol::Random), ProtocolSpec::Fixed(Protocol::LTree { ell: 64 })],
        n: Axis::Many(POWERS_OF_TWO.to_vec()),
        t: Axis::One(16),
        ell: None,
        fan_out: Axis::One(1),
        perturb_prob: Axis::One(0.0),
        drop_fraction: 0.5,
        max_delay: 1,
        alpha,
        trials: 30,
        seed: 1,
        adversary: AdversarySpec::default(),
        metrics: vec![Metric::Delay, Metric::Bounds],
        max_rounds: None,
        count_empty: true,
    };
    Some(match name {
        "fig1" => ExperimentSpec {
            protocols: vec![ProtocolSpec::Fixed(Protocol::Random)],
            n: Axis::One(100),
            t: Axis::Many(vec![1, 2, 4, 8, 16]),
            alpha: AlphaRule::TPlusOne,
            trials: 50,
            metrics: vec![Metric::Delay, Metric::ActiveSeries],
            ..fig2(AlphaRule::TPlusOne)
        },
        "fig2a" => fig2(AlphaRule::Fixed(17)),
        "fig2b" => fig2(AlphaRule::Sqrt2tn),
        "perturb" => ExperimentSpec { perturb_prob: Axis::Many(vec![0.0, 0.05]), ..fig2(AlphaRule::Fixed(17)) },
        "fanin" => ExperimentSpec {
            n: Axis::One(1024),
            t: Axis::One(2),
            alpha: AlphaRule::Fixed(4),
            trials: 100,
            metrics: vec![Metric::Fanin, Metric::Bounds],
            ..fig2(AlphaRule::Fixed(4))
        },
        _ => return None,
    })
}

pub const BUILTINS: [&str; 5] = ["fig1", "fig2a", "fig2b", "perturb", "fanin"];

/// Experiments keyed by name, for echoing into summaries.
pub fn by_name(specs: &[ExperimentSpec]) -> BTreeMap<&str, &ExperimentSpec> {
    specs.iter().map(|s| (s.name.as_str(), s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let specs = parse_specs(
            r#"
            [small]
            protocols = ["random", "ltree"]
            n = [16, 32]
            t = 2
            ell = [4, 8]
            alpha = "t+1"
            trials = 3
            adversary = { behavior = "spam", knows_genuine = false }

            [other]
            protocols = ["tree_random"]
            n = 64
            t = [1, 2]
            alpha = "sqrt2tn"
            trials = 1
            metrics = ["fanin"]
            "#,
        )
        .unwrap();
        assert_eq!(specs.len(), 2);
        let s = &specs.iter().find(|s| s.name == "small").unwrap();
        assert_eq!(s.points().len(), 4);
        assert_eq!(s.adversary.behavior, Behavior::Spam);
        assert!(!s.adversary.knows_genuine);
        assert_eq!(s.metrics, [Metric::Delay, Metric::Bounds]);
        let o = &specs.iter().find(|s| s.name == "other").unwrap();
        assert_eq!(o.protocols[0].resolve(2, None).unwrap(), Protocol::LTree { ell: 8 });
    }

    #[test]
    fn rejects_bad_specs() {
        let base = |extra: &str| format!("[x]\nprotocols = [\"random\"]\nalpha = \"t+1\"\n{extra}");
        for bad in [
            base("n = [32, 16]\nt = 1\ntrials = 1"),
            base("n = 16\nt = 1\ntrials = 0"),
            base("n = 16\nt = 1\ntrials = 1\nbogus = 3"),
            "[x]\nprotocols = [\"ltree\"]\nalpha = \"t+1\"\nn = 16\nt = 1\ntrials = 1".to_string(),
            "".to_string(),
        ] {
            assert!(matches!(parse_specs(&bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn builtins_validate() {
        for name in BUILTINS {
            let spec = builtin(name).unwrap();
            spec.validate().unwrap();
            assert_eq!(spec.name, name);
        }
        assert!(builtin("nope").is_none());
        assert_eq!(builtin("fig1").unwrap().points().len(), 5);
        assert_eq!(builtin("perturb").unwrap().points().len(), 16);
    }

    #[test]
    fn builtins_survive_toml() {
        let spec = builtin("fig2b").unwrap();
        let text = toml::to_string(&BTreeMap::from([("fig2b", &spec)])).unwrap();
        let back = parse_specs(&text).unwrap();
        assert_eq!(back, [spec]);
    }
}
