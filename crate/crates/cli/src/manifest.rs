//! Manifest schema and the objects built from it.

use std::collections::HashMap;

use serde::Deserialize;

use crreflect_core::expr::{parse_expression_with_aliases, ParseError};
use crreflect_core::manifold::{GraphedManifold, RealDefiningSystem, VarNames};
use crreflect_core::reflection::FormalCRMap;
use crreflect_core::{TruncatedSeries, VariableContext};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub order: Option<i32>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub source: ManifoldSpec,
    #[serde(default)]
    pub target: Option<ManifoldSpec>,
    /// Components of the map, written in the source `t` variables.
    #[serde(default)]
    pub map: Option<Vec<String>>,
    #[serde(default)]
    pub analyses: Vec<AnalysisSpec>,
}

/// A manifold given either by real defining functions `rho` in
/// `(t, τ)` or by graphing functions `theta_bar` for `w = Θ̄(z, ζ, ξ)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub m: usize,
    pub d: usize,
    #[serde(default)]
    pub rho: Option<Vec<String>>,
    /// Variables solved for last, as `t` names; defaults to pivoting.
    #[serde(default)]
    pub split: Option<Vec<String>>,
    #[serde(default)]
    pub theta_bar: Option<Vec<String>>,
    /// Declares `theta_bar` an exact polynomial.
    #[serde(default)]
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    #[default]
    Source,
    Target,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    pub name: String,
    #[serde(default)]
    pub manifold: Which,
    pub kmax: Option<u32>,
    pub dmax: Option<u32>,
    pub gmax: Option<u32>,
    pub beta_max: Option<u32>,
    pub ell0: Option<u32>,
    pub ell_max: Option<u32>,
    pub families: Option<Vec<u8>>,
}

impl AnalysisSpec {
    pub fn named(name: &str) -> Self {
        AnalysisSpec { name: name.into(), ..Default::default() }
    }

    fn bounds(&self) -> [(&'static str, Option<u32>); 6] {
        [
            ("kmax", self.kmax),
            ("dmax", self.dmax),
            ("gmax", self.gmax),
            ("beta_max", self.beta_max),
            ("ell0", self.ell0),
            ("ell_max", self.ell_max),
        ]
    }
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rejects bounds above the truncation order.
    pub fn validate(&self, order: i32) -> Result<(), CliError> {
        if order < 1 {
            return Err(CliError::Invalid(format!("order must be positive, got {order}")));
        }
        for a in &self.analyses {
            for (bound, value) in a.bounds() {
                if let Some(v) = value {
                    if v as i64 > order as i64 {
                        return Err(CliError::Invalid(format!("{}: {bound} = {v} exceeds the order {order}", a.name)));
                    }
                }
            }
            if let Some(fs) = &a.families {
                if let Some(f) = fs.iter().find(|f| !(1..=4).contains(*f)) {
                    return Err(CliError::Invalid(format!("{}: unknown family {f}", a.name)));
                }
            }
        }
        Ok(())
    }
}

/// Graphed manifolds and the optional map, ready for the analyses.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub order: i32,
    pub seed: u64,
    pub source: GraphedManifold,
    pub target: Option<GraphedManifold>,
    pub map: Option<FormalCRMap>,
}

impl Workspace {
    pub fn build(manifest: &Manifest, order: i32, seed: u64) -> Result<Self, CliError> {
        manifest.validate(order)?;
        let source = build_manifold(&manifest.source, VarNames::source(), order, "source")?;
        let target = match &manifest.target {
            Some(spec) => Some(build_manifold(spec, VarNames::target(), order, "target")?),
            None if manifest.map.is_some() => Some(source.renamed(VarNames::target())?),
            None => None,
        };
        let map = match (&manifest.map, &target) {
            (Some(comps), Some(t)) => {
                let aliases = t_aliases(source.context(), source.n(), &VarNames::source());
                let h = comps
                    .iter()
                    .map(|c| parse(c, source.context(), order, &aliases, "map"))
                    .collect::<Result<Vec<_>, _>>()?;
                Some(FormalCRMap::into_target(&source, t, h)?)
            }
            _ => None,
        };
        Ok(Workspace { order, seed, source, target, map })
    }

    pub fn manifold(&self, which: Which) -> Result<&GraphedManifold, CliError> {
        match which {
            Which::Source => Ok(&self.source),
            Which::Target => self.target.as_ref().ok_or(CliError::Missing("target manifold")),
        }
    }

    /// The map with its source and target.
    pub fn map(&self) -> Result<(&FormalCRMap, &GraphedManifold, &GraphedManifold), CliError> {
        let h = self.map.as_ref().ok_or(CliError::Missing("map"))?;
        let t = self.target.as_ref().ok_or(CliError::Missing("target manifold"))?;
        Ok((h, &self.source, t))
    }
}

/// `t1..tn` and `tau1..taun` (primed: `tp`, `taup`) for the ambient names.
fn t_aliases(ctx: &VariableContext, n: usize, names: &VarNames) -> HashMap<String, String> {
    let (t, tau) = if names == &VarNames::target() { ("tp", "taup") } else { ("t", "tau") };
    let mut out = HashMap::new();
    for i in 0..n {
        out.insert(format!("{t}{}", i + 1), ctx.name(i).to_string());
        out.insert(format!("{tau}{}", i + 1), ctx.name(i + n).to_string());
    }
    out
}

fn parse(
    text: &str,
    ctx: &VariableContext,
    order: i32,
    aliases: &HashMap<String, String>,
    what: &str,
) -> Result<TruncatedSeries, CliError> {
    parse_expression_with_aliases(text, ctx, order, aliases).map_err(|e: ParseError| CliError::Parse {
        what: what.to_string(),
        text: text.to_string(),
        msg: e.to_string(),
    })
}

fn build_manifold(spec: &ManifoldSpec, names: VarNames, order: i32, what: &str) -> Result<GraphedManifold, CliError> {
    let ctx = VariableContext::new(&names.ambient(spec.m, spec.d))?;
    let n = spec.m + spec.d;
    let aliases = t_aliases(&ctx, n, &names);
    let exprs = |list: &[String]| -> Result<Vec<TruncatedSeries>, CliError> {
        list.iter().map(|s| parse(s, &ctx, order, &aliases, what)).collect()
    };
    match (&spec.rho, &spec.theta_bar) {
        (Some(rho), None) => {
            let sys = RealDefiningSystem::new(&ctx, exprs(rho)?)?;
            let split = match &spec.split {
                Some(vars) => Some(
                    vars.iter()
                        .map(|v| {
                            let v = aliases.get(v).map(String::as_str).unwrap_or(v);
                            ctx.index_of(v).filter(|&i| i < n).ok_or_else(|| {
                                CliError::Invalid(format!("{what}: split variable {v} is not a t variable"))
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                None => None,
            };
            Ok(GraphedManifold::complexify_and_graph(&sys, split.as_deref(), names)?)
        }
        (None, Some(tb)) => {
            if spec.split.is_some() {
                return Err(CliError::Invalid(format!("{what}: split applies to rho only")));
            }
            let m = GraphedManifold::from_theta_bar(spec.m, spec.d, names, exprs(tb)?)?;
            Ok(if spec.exact { m.mark_exact() } else { m })
        }
        _ => Err(CliError::Invalid(format!("{what}: give exactly one of rho and theta_bar"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heisenberg_manifest() -> Manifest {
        Manifest::from_json(
            r#"{
                "order": 6,
                "source": { "m": 1, "d": 1, "rho": ["w1 - xi1 - i*z1*zeta1"] },
                "map": ["t1", "w1"],
                "analyses": [{ "name": "verify-cr" }]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn builds_source_target_and_map() {
        let ws = Workspace::build(&heisenberg_manifest(), 6, 0).unwrap();
        assert_eq!(ws.source.m(), 1);
        let t = ws.target.as_ref().unwrap();
        assert_eq!(t.context().name(0), "zp1");
        assert!(ws.map.is_some());
    }

    #[test]
    fn theta_bar_and_rho_agree() {
        let m = Manifest::from_json(
            r#"{ "source": { "m": 1, "d": 1, "theta_bar": ["xi1 + i*z1*zeta1"], "exact": true } }"#,
        )
        .unwrap();
        let a = Workspace::build(&m, 6, 0).unwrap().source;
        let b = Workspace::build(&heisenberg_manifest(), 6, 0).unwrap().source;
        assert_eq!(a.theta_bar(), b.theta_bar());
        assert!(a.is_exact());
    }

    #[test]
    fn bounds_above_the_order_are_rejected() {
        let mut m = heisenberg_manifest();
        m.analyses[0].kmax = Some(9);
        assert!(matches!(Workspace::build(&m, 6, 0), Err(CliError::Invalid(_))));
    }

    #[test]
    fn unknown_variables_are_reported() {
        let mut m = heisenberg_manifest();
        m.map = Some(vec!["q1".into(), "w1".into()]);
        assert!(matches!(Workspace::build(&m, 6, 0), Err(CliError::Parse { .. })));
    }
}
