//! Named analyses behind a common trait, looked up at run time.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crreflect_core::nondegen::{
    classify_manifold, classify_map, cr_implications_hold, determinant_criterion, h_implications_hold,
    holomorphic_degeneracy_field, nd_implications_hold, DegeneracyField,
};
use crreflect_core::reflection::{
    check_resolution, q_jbeta_cramer, reflection_components, reflection_identities, resolve_finitely_nondeg,
    transversality_kernel, verify_formal_cr_map, ResidualReport,
};
use crreflect_core::segre::{default_kmax, minimality};
use crreflect_core::VariableContext;

use crate::json::{self, decision, verdict_word};
use crate::manifest::{AnalysisSpec, Workspace};
use crate::CliError;

/// Structured result plus a one-line summary for the terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub result: Value,
    pub summary: String,
}

pub trait Analysis {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn run(&self, ws: &Workspace, spec: &AnalysisSpec) -> Result<Outcome, CliError>;
}

pub struct Registry {
    entries: BTreeMap<&'static str, Box<dyn Analysis>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry { entries: BTreeMap::new() }
    }

    pub fn register(&mut self, a: Box<dyn Analysis>) {
        self.entries.insert(a.name(), a);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Analysis> {
        self.entries.get(name).map(|b| b.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Analysis> {
        self.entries.values().map(|b| b.as_ref())
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry::empty();
        r.register(Box::new(Minimality));
        r.register(Box::new(ClassifyManifold));
        r.register(Box::new(DegeneracyFieldSearch));
        r.register(Box::new(DeterminantCriterion));
        r.register(Box::new(VerifyCr));
        r.register(Box::new(Identities));
        r.register(Box::new(Reflection));
        r.register(Box::new(Cramer));
        r.register(Box::new(ClassifyMap));
        r.register(Box::new(Resolution));
        r.register(Box::new(Transversality));
        r
    }
}

fn clamp(v: u32, order: i32) -> u32 {
    v.min(order.max(0) as u32)
}

fn field_json(ctx: &VariableContext, f: &DegeneracyField) -> Value {
    json!({
        "coefficients": f.coefficients.iter().map(json::series).collect::<Vec<_>>(),
        "text": json::vector_field_text(ctx, &f.coefficients),
        "kernel_dim": f.kernel_dim,
        "exact_tangent": f.exact_tangent,
        "nonzero_at_origin": f.nonzero_at_origin(),
    })
}

fn residuals_json(rep: &ResidualReport, families: &[u8]) -> Value {
    let per_family: BTreeMap<String, Value> = families
        .iter()
        .map(|&f| (f.to_string(), json!({ "vanishes": rep.family_vanishes(f), "first_failure": rep.first_failure(f) })))
        .collect();
    let entries: Vec<Value> = rep
        .entries
        .iter()
        .map(|e| {
            json!({
                "family": e.family,
                "j": e.j,
                "beta": json::multidegree(&e.beta),
                "valuation": e.valuation,
                "order": json::order(e.order),
            })
        })
        .collect();
    json!({ "pass": rep.pass(), "order": json::order(rep.min_order()), "families": per_family, "entries": entries })
}

fn residual_summary(rep: &ResidualReport) -> String {
    match rep.entries.iter().filter_map(|e| e.valuation).min() {
        None => format!("all residuals vanish through order {}", rep.min_order()),
        Some(v) => format!("residuals first fail at degree {v}"),
    }
}

struct Minimality;

impl Analysis for Minimality {
    fn name(&self) -> &'static str {
        "minimality"
    }

    fn describe(&self) -> &'static str {
        "Segre chain ranks and the minimality index"
    }

    fn run(&self, ws: &Workspace, spec: &AnalysisSpec) -> Result<Outcome, CliError> {
        let m = ws.manifold(spec.manifold)?;
        let kmax = spec.kmax.map(|k| k as usize).unwrap_or_else(|| default_kmax(m.d()));
        let rep = minimality(m, kmax, ws.seed)?;
        let witness = rep.mu0_witness.as_ref().map(
            |w| json!({ "mu0": w.mu0, "times": w.times.iter().map(json::gq).collect::<Vec<_>>(), "rank": w.rank }),
        );
        let summary = match rep.nu0 {
            Some(nu) if rep.minimal => format!("minimal, nu0 = {nu}"),
            _ => format!("minimality not reached for k <= {kmax}"),
        };
        Ok(Outcome {
            result: json!({
                "kmax": kmax,
                "minimal": rep.minimal,
                "nu0": rep.nu0,
                "ranks": rep.ranks,
                "ranks_barred": rep.ranks_barred,
                "certified": rep.certified,
                "mu0_witness": witness,
            }),
            summary,
        })
    }
}

struct ClassifyManifold;

impl Analysis for ClassifyManifold {
    fn name(&self) -> &'static str {
        "classify-manifold"
    }

    fn describe(&self) -> &'static str {
        "nondegeneracy conditions nd1 to nd5"
    }

    fn run(&self, ws: &Workspace, spec: &AnalysisSpec) -> Result<Outcome, CliError> {
        let m = ws.manifold(spec.manifold)?;
        let kmax = clamp(spec.kmax.unwrap_or(3), m.order());
        let dmax = spec.dmax.unwrap_or(4);
        let c = classify_manifold(m, kmax, dmax, ws.seed)?;
        let flags = c.flags();
        let mut summary: Vec<String> =
            flags.iter().enumerate().map(|(i, d)| format!("nd{} {}", i + 1, verdict_word(&d.verdict))).collect();
        if let Some(f) = &c.degeneracy_field {
            summary.push(format!("field {}", json::vector_field_text(m.context(), &f.coefficients)));
        }
        let mut result = json!({
            "kmax": kmax,
            "dmax": dmax,
            "degeneracy_field": c.degeneracy_field.as_ref().map(|f| field_json(m.context(), f)),
            "nd5_cross_check": c.nd5_cross_check,
            "implications_hold": nd_implications_hold(&c),
        });
        for (i, d) in flags.iter().enumerate() {
            result[format!("nd{}", i + 1)] = decision(d);
        }
        Ok(Outcome { result, summary: summary.join(", ") })
    }
}

struct DegeneracyFieldSearch;

impl Analysis for DegeneracyFieldSearch {
    fn name(&self) -> &'static str {
        "degeneracy-field"
    }

    fn describe(&self) -> &'static str {
        "polynomial holomorphic vector field tangent to the manifold"
    }

    fn run(&self, ws: &Workspace, spec: &AnalysisSpec) -> Result<Outcome, CliError> {
        let m = ws.manifold(spec.manifold)?;
        let dmax = spec.dmax.unwrap_or(4);
        let field = holomorphic_degeneracy_field(m, dmax)?;
        let summary = match &field {
            Some(f) => format!("tangent field {}", json::vector_field_text(m.context(), &f.coefficients)),
            None => format!("no tangent field of degree <= {dmax}"),
        };
        Ok(Outcome {
            result: json!({ "dmax": dmax, "field": field.as_ref().map(|f| field_json(m.context(), f)) }),
            summary,
        })
    }
}

struct DeterminantCriterion;

impl Analysis for DeterminantCriterion {
    fn name(&self) -> &'static str {
        "determinant-criterion"
    }

    fn describe(&self) -> &'static str {
        "generic rank of the Segre jet map"
    }

    fn run(&self, ws: &Workspace, spec: &AnalysisSpec) -> Result<Outcome, CliError> {
        let m = ws.manifold(spec.manifold)?;
        let k = clamp(spec.kmax.unwrap_or(3), m.order());
        let c = determinant_criterion(m, k, ws.seed);
        Ok(Outcome {
            result: json!({ "k": k, "verdict": json::verdict(&c.verdict), "rank": json::rank(&c.rank) }),
            summary: format!("{} (rank {})", verdict_word(&c.verdict), c.rank.rank),
        })
    }
}

struct VerifyCr;

impl Analysis for VerifyCr {
    fn name(&self) -> &'static str {
        "verify-cr"
    }

    fn describe(&self) -> &'static str {
        "whether the map sends the source into the target"
    }

    fn run(&self, ws: &Workspace, _spec: &AnalysisSpec) -> Result<Outcome, CliError> {
        let (h, s, t) = ws.map()?;
        let rep = verify_formal_cr_map(h, s, t)?;
        Ok(Outcome { result: residuals_json(&rep, &[1, 2]), summary: residual_summary(&rep) })
    }
}

struct Identities;

impl Analysis for Identities {
    fn name(&self) -> &'static str {
        "identities"
    }

    fn describe(&self) -> &'static str {
        "residuals of the four families of reflection identities"
    }

    fn run(&self, ws: &Workspace, spec: &AnalysisSpec) -> Result<Outcome, CliError> {
        let (h, s, t) = ws.map()?;
        let beta_max = spec.beta_max.unwrap_or(2);
        let families = spec.families.clone().unwrap_or_else(|| vec![1, 2, 3, 4]);
        let rep = reflection_identities(h, s, t, beta_max, &families)?;
        let mut result = residuals_json(&rep, &families);
        result["beta_max"] = json!(beta_max);
        Ok(Outcome { result, summary: residual_summary(&rep) })
    }
}

struct Reflection;

impl Analysis for Reflection {
    fn name(&self) -> &'static str {
        "reflection"
    }

    fn describe(&self) -> &'static str {
        "components of the reflection map"
    }

    fn run(&self, ws: &Workspace, spec: &AnalysisSpec) -> Result<Outcome, CliError> {
        let (h, _, t) = ws.map()?;
        let gmax = spec.gmax.unwrap_or(ws.order.max(0) as u32);
        let comps = reflection_components(h, t, gmax)?;
        let table: Vec<Value> = comps
            .table
            .iter()
            .map(|(g, v)| json!({ "gamma": json::multidegree(g), "components": v.iter().map(json::series).collect::<Vec<_>>() }))
            .collect();
        let nonzero = comps.table.values().filter(|v| v.iter().any(|s| !s.is_zero())).count();
        Ok(Outcome {
            result: json!({ "gmax": gmax, "table": table }),
            summary: format!("{nonzero} of {} multi-indices carry nonzero components", comps.table.len()),
        })
    }
}

struct Cramer;

impl Analysis for Cramer {
    fn name(&self) -> &'static str {
        "cramer"
    }

    fn describe(&self) -> &'static str {
        "reflection jets by Cramer's rule against direct differentiation"
    }

    fn run(&self, ws: &Workspace, spec: &AnalysisSpec) -> Result<Outcome, CliError> {
        let (h, s, t) = ws.map()?;
        let beta_max = spec.beta_max.unwrap_or(2);
        let rep = q_jbeta_cramer(h, s, t, beta_max)?;
        let entries: Vec<Value> = rep
            .entries
            .iter()
            .map(|e| {
                json!({
                    "j": e.j,
                    "beta": json::multidegree(&e.beta),
                    "agrees": e.agrees,
                    "order": json::order(e.order),
                    "value": json::series(&e.cramer),
                })
            })
            .collect();
        let agree = rep.all_agree();
        Ok(Outcome {
            result: json!({
                "beta_max": beta_max,
                "det_at_origin": json::gq(&rep.det_at_origin),
                "all_agree": agree,
                "entries": entries,
            }),
            summary: format!(
                "{} entries, {}",
                rep.entries.len(),
                if agree { "all agree" } else { "disagreement found" }
            ),
        })
    }
}

struct ClassifyMap;

impl Analysis for ClassifyMap {
    fn name(&self) -> &'static str {
        "classify-map"
    }

    fn describe(&self) -> &'static str {
        "conditions cr1 to cr5 and h1 to h4 of the map"
    }

    fn run(&self, ws: &Workspace, spec: &AnalysisSpec) -> Result<Outcome, CliError> {
        let (h, s, t) = ws.map()?;
        let kmax = clamp(spec.kmax.unwrap_or(3), ws.order);
        let dmax = spec.dmax.unwrap_or(4);
        let c = classify_map(h, s, t, kmax, dmax, ws.seed)?;
        let mut result = json!({
            "kmax": kmax,
            "dmax": dmax,
            "relations": c.cr.relations.iter().map(json::series).collect::<Vec<_>>(),
            "ell0": c.h.ell0,
            "implications_hold": cr_implications_hold(&c.cr) && h_implications_hold(&c.h),
        });
        let mut summary = Vec::new();
        for (i, d) in c.cr.flags().iter().enumerate() {
            result[format!("cr{}", i + 1)] = decision(d);
            summary.push(format!("cr{} {}", i + 1, verdict_word(&d.verdict)));
        }
        for (i, d) in c.h.flags().iter().enumerate() {
            result[format!("h{}", i + 1)] = decision(d);
            summary.push(format!("h{} {}", i + 1, verdict_word(&d.verdict)));
        }
        Ok(Outcome { result, summary: summary.join(", ") })
    }
}

struct Resolution;

impl Analysis for Resolution {
    fn name(&self) -> &'static str {
        "resolution"
    }

    fn describe(&self) -> &'static str {
        "map expressed through jets of its conjugate, with residual checks"
    }

    fn run(&self, ws: &Workspace, spec: &AnalysisSpec) -> Result<Outcome, CliError> {
        let (h, s, t) = ws.map()?;
        let ell0 = spec.ell0.unwrap_or(1);
        let ell_max = spec.ell_max.unwrap_or(1);
        let res = resolve_finitely_nondeg(h, s, t, ell0)?;
        let chk = check_resolution(&res, h, s, ell_max)?;
        let levels: Vec<Value> = chk
            .jet_levels
            .iter()
            .map(|(l, v, o)| json!({ "ell": l, "valuation": v, "order": json::order(*o) }))
            .collect();
        let rows: Vec<Value> = res.rows.iter().map(|(j, b)| json!([j, json::multidegree(b)])).collect();
        Ok(Outcome {
            result: json!({
                "ell0": ell0,
                "ell_max": ell_max,
                "rows": rows,
                "jet_variables": res.jets.index.len(),
                "direct": chk.direct,
                "conjugate": chk.conjugate,
                "order": json::order(chk.order),
                "jet_levels": levels,
                "pass": chk.pass(),
            }),
            summary: if chk.pass() {
                format!("resolved with ell0 = {ell0}, residuals vanish through order {}", chk.order)
            } else {
                "resolution residuals do not vanish".into()
            },
        })
    }
}

struct Transversality;

impl Analysis for Transversality {
    fn name(&self) -> &'static str {
        "transversality"
    }

    fn describe(&self) -> &'static str {
        "polynomial relations among the conjugate horizontal components"
    }

    fn run(&self, ws: &Workspace, spec: &AnalysisSpec) -> Result<Outcome, CliError> {
        let (h, s, _) = ws.map()?;
        let degree = spec.dmax.unwrap_or(2);
        let kernel = transversality_kernel(h, s, degree, ws.order.max(0) as u32)?;
        Ok(Outcome {
            result: json!({ "degree": degree, "relations": kernel.iter().map(json::series).collect::<Vec<_>>() }),
            summary: format!("{} relations of degree <= {degree}", kernel.len()),
        })
    }
}
