//! Exact JSON encodings: rationals as `"p/q"`, Gaussian rationals as
//! `["p/q", "p/q"]`, series as term lists.

use serde_json::{json, Value};

use crreflect_core::expr::print_series;
use crreflect_core::nondegen::{Decision, Verdict};
use crreflect_core::series::{Gq, RankReport, Rational, EXACT};
use crreflect_core::{Multidegree, TruncatedSeries, VariableContext};

pub fn rational(r: &Rational) -> Value {
    let s = r.to_string();
    if s.contains('/') {
        Value::String(s)
    } else {
        Value::String(format!("{s}/1"))
    }
}

pub fn gq(c: &Gq) -> Value {
    json!([rational(&c.re), rational(&c.im)])
}

pub fn order(o: i32) -> Value {
    if o >= EXACT {
        Value::String("exact".into())
    } else {
        json!(o)
    }
}

pub fn multidegree(a: &Multidegree) -> Value {
    json!(a.to_vec())
}

pub fn series(s: &TruncatedSeries) -> Value {
    let terms: Vec<Value> = s.terms().map(|(a, c)| json!([multidegree(a), gq(c)])).collect();
    json!({ "text": print_series(s), "order": order(s.order()), "terms": terms })
}

pub fn verdict(v: &Verdict) -> Value {
    match v {
        Verdict::Holds => json!({ "verdict": "holds" }),
        Verdict::Fails => json!({ "verdict": "fails" }),
        Verdict::Inconclusive { bound } => json!({ "verdict": "inconclusive", "bound": bound }),
    }
}

pub fn verdict_word(v: &Verdict) -> String {
    match v {
        Verdict::Holds => "holds".into(),
        Verdict::Fails => "fails".into(),
        Verdict::Inconclusive { bound } => format!("inconclusive({bound})"),
    }
}

pub fn decision(d: &Decision) -> Value {
    let mut v = verdict(&d.verdict);
    v["k0"] = json!(d.k0);
    v["degree"] = json!(d.degree);
    v
}

pub fn rank(r: &RankReport) -> Value {
    json!({ "rank": r.rank, "sampled": r.sampled, "certified": r.certified })
}

/// `Σ a_i ∂/∂x_i` over the `t` names of `ctx`, e.g. `(1)*d/dzp2`.
pub fn vector_field_text(ctx: &VariableContext, coefficients: &[TruncatedSeries]) -> String {
    let parts: Vec<String> = coefficients
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.is_zero())
        .map(|(i, a)| format!("({})*d/d{}", print_series(a), ctx.name(i)))
        .collect();
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join(" + ")
    }
}
