use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::envelope::Bound;
use super::stages::{
    start_map, stage_forms, ChainedGaps, EnvelopeBook, Input, Kind, LedgerGeometry, LinearBound, Piece, Slot,
    Source, StageForms, StageId, Term,
};
use crate::error::Result;
use crate::geometry::CYLINDER_RADIUS;

pub const DEFAULT_SLACK: f64 = 1.10;

/// The envelopes as stated for the published ledger; `y_S` enters through
/// `geom`.
pub fn paper_envelopes(geom: &LedgerGeometry) -> BTreeMap<(Piece, Slot), Bound> {
    let ys = geom.y_sphere;
    let r2 = CYLINDER_RADIUS;
    let p = Bound::poly;
    let mut m = BTreeMap::new();
    let mut put = |piece, slot, b| {
        m.insert((piece, slot), b);
    };
    put(Piece::TopX1, Slot::Iu, p(0.0, &[0.0, 4.0 / 5.0]));
    put(Piece::TopX1, Slot::Ip, p(0.0, &[0.0, 0.0, 8.0 / 3.0]));
    put(Piece::TopX1, Slot::Pint, p(0.0, &[0.0, 0.0, 7.0 / 20.0, 0.0, 7.0 / 20.0]));
    put(Piece::TopX1, Slot::Qint, p(0.0, &[0.0, 5.0 / 2.0, 0.0, 16.0 / 15.0]));
    put(Piece::TopX1, Slot::W1, p(0.0, &[0.0, 3.0, 0.0, 2.0]));
    put(Piece::TopX1, Slot::W2, p(0.0, &[8.0 / 5.0, 0.0, -3.0 / 2.0]));

    put(Piece::TopX2ToSphere, Slot::Iu, p(0.0, &[13.0 / 8.0, -1.0 / 2.0]));
    put(Piece::TopX2ToSphere, Slot::Ip, p(ys, &[7.0 / 4.0, 0.0, -9.0 / 10.0]));
    put(Piece::TopX2ToSphere, Slot::Pint, p(0.0, &[-18.0 / 25.0, 22.0 / 10.0, -16.0 / 25.0]));
    put(Piece::TopX2ToSphere, Slot::Qint, p(0.0, &[-19.0 / 10.0, 7.0 / 25.0, -27.0 / 100.0]));
    put(Piece::TopX2ToSphere, Slot::W1, p(ys, &[3.0 / 10.0, 0.0, 0.0, 0.0, 0.0, 33.0 / 20.0]));
    put(
        Piece::TopX2ToSphere,
        Slot::W2,
        Bound::Piecewise(vec![
            (ys, p(ys, &[41.0 / 200.0, 0.0, -3.0 / 10.0])),
            (5.0 / 2.0, p(ys, &[3.0 / 4.0, -5.0 / 2.0, 21.0 / 10.0])),
        ]),
    );

    put(Piece::TopX2SphereToCyl, Slot::Iu, p(ys, &[0.0, -1.0 / 4.0]));
    put(Piece::TopX2SphereToCyl, Slot::Ip, p(ys, &[0.0, -27.0 / 50.0]));

    put(Piece::BotX1, Slot::Iu, p(0.0, &[1.0 / 20.0, 29.0 / 5.0]));
    put(Piece::BotX1, Slot::Ip, p(0.0, &[0.0, 1.0 / 5.0, 4.0]));
    put(Piece::BotX1, Slot::Pint, p(0.0, &[0.0, 0.0, 4.0 / 9.0]));
    put(Piece::BotX1, Slot::Qint, p(0.5, &[4.0, 0.0, -16.0]));
    put(Piece::BotX1, Slot::W1, Bound::constant(2.0));
    put(Piece::BotX1, Slot::W2, p(0.0, &[41.0, -80.0]));

    put(Piece::BotX2ToCyl, Slot::Iu, p(0.0, &[-3.0 / 7.0, 16.0 / 25.0]));
    put(Piece::BotX2ToCyl, Slot::Ip, p(1.5, &[9.0 / 10.0, 0.0, -11.0 / 10.0]));
    put(Piece::BotX2ToCyl, Slot::Pint, p(r2, &[9.0 / 20.0, 0.0, -3.0 / 4.0]));
    put(Piece::BotX2ToCyl, Slot::Qint, p(0.0, &[-2.0 / 5.0, 1.0]));
    put(Piece::BotX2ToCyl, Slot::W1, p(r2, &[4.0 / 5.0, 0.0, 8.0]));
    put(Piece::BotX2ToCyl, Slot::W2, p(r2, &[24.0 / 50.0, 0.0, -3.0 / 4.0]));
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// In the stage's own start symbols and inputs.
    Local,
    /// In base inputs, with the published outputs of earlier stages fed in.
    Chained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Value,
    Deriv,
    Intermediate(&'static str),
}

/// One published coefficient display.
#[derive(Debug, Clone, PartialEq)]
pub struct PaperLine {
    pub stage: StageId,
    pub label: &'static str,
    pub quantity: Quantity,
    pub basis: Basis,
    pub paper: Vec<(Term, f64)>,
}

use Input::*;

fn line(
    stage: (Piece, Kind),
    label: &'static str,
    quantity: Quantity,
    basis: Basis,
    paper: &[(Term, f64)],
) -> PaperLine {
    PaperLine { stage: StageId::new(stage.0, stage.1), label, quantity, basis, paper: paper.to_vec() }
}

const fn i(x: Input) -> Term {
    Term::In(x)
}

/// Every published coefficient chain, in ledger order.
pub fn paper_lines() -> Vec<PaperLine> {
    use Basis::*;
    use Kind::*;
    use Piece::*;
    use Quantity::*;
    let (sv, sd, gsv, gsd) = (Term::StartValue, Term::StartDeriv, Term::GeoStartValue, Term::GeoStartDeriv);
    let e = (156.0f64 / 125.0).exp();
    vec![
        line((TopX1, Geodesic), "derivative gap", Deriv, Chained, &[(i(U0Gap), 12.0 / 25.0 * e), (i(Eps1Top), 3.0 / 5.0 * e)]),
        line((TopX1, Geodesic), "value gap", Value, Chained, &[(i(U0Gap), 23.0 / 80.0), (i(Eps1Top), 9.0 / 25.0)]),
        line((TopX2ToSphere, Geodesic), "derivative gap (local)", Deriv, Local, &[(sv, 59.0 / 4.0), (sd, 54.0 / 5.0), (i(Eps2Top), 377.0 / 20.0)]),
        line((TopX2ToSphere, Geodesic), "derivative gap", Deriv, Chained, &[(i(U0Gap), 27.0), (i(Eps1Top), 34.0), (i(Eps2Top), 19.0)]),
        line((TopX2ToSphere, Geodesic), "value gap (local)", Value, Local, &[(sv, 1.0 + 63.0 / 8.0), (sd, 83.0 / 20.0), (i(Eps2Top), 137.0 / 20.0)]),
        line((TopX2ToSphere, Geodesic), "value gap", Value, Chained, &[(i(U0Gap), 12.0), (i(Eps1Top), 15.0), (i(Eps2Top), 7.0)]),
        line((TopX2ToSphere, Geodesic), "value gap at the sphere (restated)", Value, Chained, &[(i(U0Gap), 317.0 / 25.0), (i(Eps1Top), 11.0), (i(Eps2Top), 27.0 / 5.0)]),
        line((TopX2SphereToCyl, Geodesic), "derivative gap (local)", Deriv, Local, &[(sv, 1.0 / 8.0), (sd, 4.0 / 3.0), (i(Eps3Top), 1.0 / 2.0)]),
        line((TopX2SphereToCyl, Geodesic), "derivative gap", Deriv, Chained, &[(i(U0Gap), 36.0), (i(Eps1Top), 45.0), (i(Eps2Top), 25.0), (i(Eps3Top), 1.0 / 2.0)]),
        line((TopX2SphereToCyl, Geodesic), "value gap (local)", Value, Local, &[(sv, 1.0 + 1.0 / 50.0), (sd, 33.0 / 80.0), (i(Eps3Top), 2.0 / 25.0)]),
        line((TopX2SphereToCyl, Geodesic), "value gap", Value, Chained, &[(i(U0Gap), 24.0), (i(Eps1Top), 30.0), (i(Eps2Top), 15.0), (i(Eps3Top), 2.0 / 25.0)]),
        line((BotX1, Geodesic), "derivative gap", Deriv, Chained, &[(i(U0Gap), 39.0), (i(Eps1Bot), 28.0 / 5.0)]),
        line((BotX1, Geodesic), "value gap", Value, Chained, &[(i(U0Gap), 23.0 / 5.0), (i(Eps1Bot), 3.0 / 5.0)]),
        line((BotX2ToCyl, Geodesic), "derivative gap (local)", Deriv, Local, &[(sv, 13.0 / 8.0), (sd, 17.0 / 5.0), (i(Eps2Bot), 69.0 / 29.0)]),
        line((BotX2ToCyl, Geodesic), "derivative gap", Deriv, Chained, &[(i(U0Gap), 100.0), (i(Eps1Bot), 15.0), (i(Eps2Bot), 5.0 / 2.0)]),
        line((BotX2ToCyl, Geodesic), "value gap (local)", Value, Local, &[(sv, 1.0 + 23.0 / 50.0), (sd, 14.0 / 9.0), (i(Eps2Bot), 2.0 / 3.0)]),
        line((BotX2ToCyl, Geodesic), "value gap", Value, Chained, &[(i(U0Gap), 48.0), (i(Eps1Bot), 7.0), (i(Eps2Bot), 2.0 / 3.0)]),
        line((TopX1, Jacobi), "W1 integral", Intermediate("w1_integral"), Chained, &[(i(U0Gap), 9.0 / 20.0), (i(Eps1Top), 14.0 / 25.0)]),
        line((TopX1, Jacobi), "W2 double integrals", Intermediate("w2_integral"), Chained, &[(i(U0Gap), 23.0 / 25.0), (i(Eps1Top), 7.0 / 100.0)]),
        line((TopX1, Jacobi), "bracket at the end", Intermediate("bracket"), Chained, &[(i(U0Gap), 137.0 / 100.0), (i(Eps1Top), 63.0 / 100.0), (i(Delta1Top), 3.0 / 5.0)]),
        line((TopX1, Jacobi), "derivative gap", Deriv, Chained, &[(i(U0Gap), 23.0 / 5.0), (i(Eps1Top), 11.0 / 5.0), (i(Delta1Top), 51.0 / 25.0)]),
        line((TopX1, Jacobi), "value gap", Value, Chained, &[(i(U0Gap), 13.0 / 10.0), (i(Eps1Top), 3.0 / 5.0), (i(Delta1Top), 11.0 / 50.0)]),
        line((TopX2ToSphere, Jacobi), "W1 integral", Intermediate("w1_integral"), Chained, &[(i(U0Gap), 80.0 / 25.0), (i(Eps1Top), 6.0), (i(Eps2Top), 27.0 / 10.0)]),
        line((TopX2ToSphere, Jacobi), "W2 double integrals (local)", Intermediate("w2_integral"), Local, &[(gsv, 29.0 / 50.0), (gsd, 29.0 / 50.0), (i(Eps2Top), 19.0 / 50.0)]),
        line((TopX2ToSphere, Jacobi), "W2 integral", Intermediate("w2_integral"), Chained, &[(i(U0Gap), 1.0 / 2.0), (i(Eps1Top), 29.0 / 50.0), (i(Eps2Top), 19.0 / 50.0)]),
        line((BotX1, Jacobi), "W1 integral", Intermediate("w1_integral"), Chained, &[(i(U0Gap), 36.0 / 5.0), (i(Eps1Bot), 6.0 / 5.0)]),
        line((BotX1, Jacobi), "W2 double integrals", Intermediate("w2_integral"), Chained, &[(i(U0Gap), 67.0 / 5.0), (i(Eps1Bot), 12.0 / 25.0)]),
        line((BotX1, Jacobi), "bracket at the end", Intermediate("bracket"), Chained, &[(i(U0Gap), 103.0 / 5.0), (i(Eps1Bot), 42.0 / 25.0), (i(Delta1Bot), 1.0 / 2.0)]),
        line((BotX1, Jacobi), "derivative gap", Deriv, Chained, &[(i(U0Gap), 171.0), (i(Eps1Bot), 14.0), (i(Delta1Bot), 38.0 / 9.0)]),
        line((BotX1, Jacobi), "value gap", Value, Chained, &[(i(U0Gap), 31.0), (i(Eps1Bot), 51.0 / 20.0), (i(Delta1Bot), 11.0 / 5.0)]),
        line((BotX2ToCyl, Jacobi), "W1 integral", Intermediate("w1_integral"), Chained, &[(i(U0Gap), 78.0), (i(Eps1Bot), 12.0), (i(Eps2Bot), 9.0 / 10.0)]),
        line((BotX2ToCyl, Jacobi), "W2 double integrals (local)", Intermediate("w2_integral"), Local, &[(gsv, 3.0 / 10.0), (gsd, 1.0 / 5.0), (i(Eps2Bot), 7.0 / 125.0)]),
        line((BotX2ToCyl, Jacobi), "W2 integral", Intermediate("w2_integral"), Chained, &[(i(U0Gap), 197.0 / 30.0), (i(Eps1Bot), 47.0 / 50.0), (i(Eps2Bot), 7.0 / 125.0)]),
        line((BotX2ToCyl, Jacobi), "exponential factor", Intermediate("exp_end"), Local, &[(Term::One, 63.0 / 20.0)]),
        line((BotX2ToCyl, Jacobi), "derivative gap", Deriv, Chained, &[(i(U0Gap), 813.0), (i(Eps1Bot), 86.0), (i(Eps2Bot), 3.0), (i(Delta1Bot), 95.0 / 27.0), (i(Delta2Bot), CYLINDER_RADIUS - 28.0 / 39.0)]),
        line((BotX2ToCyl, Jacobi), "value gap", Value, Chained, &[(i(U0Gap), 522.0), (i(Eps1Bot), 56.0), (i(Eps2Bot), 2.0), (i(Delta1Bot), 11.0), (i(Delta2Bot), 9.0 / 10.0)]),
    ]
}

/// Published end gaps, fed to later stages in the stepwise replay.
pub fn paper_outputs() -> BTreeMap<StageId, ChainedGaps> {
    let e = (156.0f64 / 125.0).exp();
    let g = |v: &[(Term, f64)], d: &[(Term, f64)]| ChainedGaps {
        value: LinearBound::from_pairs(v),
        deriv: LinearBound::from_pairs(d),
    };
    let mut m = BTreeMap::new();
    m.insert(
        StageId::new(Piece::TopX1, Kind::Geodesic),
        g(&[(i(U0Gap), 23.0 / 80.0), (i(Eps1Top), 9.0 / 25.0)], &[(i(U0Gap), 12.0 / 25.0 * e), (i(Eps1Top), 3.0 / 5.0 * e)]),
    );
    m.insert(
        StageId::new(Piece::TopX2ToSphere, Kind::Geodesic),
        g(&[(i(U0Gap), 12.0), (i(Eps1Top), 15.0), (i(Eps2Top), 7.0)], &[(i(U0Gap), 27.0), (i(Eps1Top), 34.0), (i(Eps2Top), 19.0)]),
    );
    m.insert(
        StageId::new(Piece::TopX2SphereToCyl, Kind::Geodesic),
        g(
            &[(i(U0Gap), 24.0), (i(Eps1Top), 30.0), (i(Eps2Top), 15.0), (i(Eps3Top), 2.0 / 25.0)],
            &[(i(U0Gap), 36.0), (i(Eps1Top), 45.0), (i(Eps2Top), 25.0), (i(Eps3Top), 1.0 / 2.0)],
        ),
    );
    m.insert(
        StageId::new(Piece::BotX1, Kind::Geodesic),
        g(&[(i(U0Gap), 23.0 / 5.0), (i(Eps1Bot), 3.0 / 5.0)], &[(i(U0Gap), 39.0), (i(Eps1Bot), 28.0 / 5.0)]),
    );
    m.insert(
        StageId::new(Piece::BotX2ToCyl, Kind::Geodesic),
        g(&[(i(U0Gap), 48.0), (i(Eps1Bot), 7.0), (i(Eps2Bot), 2.0 / 3.0)], &[(i(U0Gap), 100.0), (i(Eps1Bot), 15.0), (i(Eps2Bot), 5.0 / 2.0)]),
    );
    m.insert(
        StageId::new(Piece::TopX1, Kind::Jacobi),
        g(
            &[(i(U0Gap), 13.0 / 10.0), (i(Eps1Top), 3.0 / 5.0), (i(Delta1Top), 11.0 / 50.0)],
            &[(i(U0Gap), 23.0 / 5.0), (i(Eps1Top), 11.0 / 5.0), (i(Delta1Top), 51.0 / 25.0)],
        ),
    );
    m.insert(
        StageId::new(Piece::BotX1, Kind::Jacobi),
        g(
            &[(i(U0Gap), 31.0), (i(Eps1Bot), 51.0 / 20.0), (i(Delta1Bot), 11.0 / 5.0)],
            &[(i(U0Gap), 171.0), (i(Eps1Bot), 14.0), (i(Delta1Bot), 38.0 / 9.0)],
        ),
    );
    m
}

/// Geometry, measured envelopes and envelopes to reject for a replay.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerContext {
    pub geometry: Option<LedgerGeometry>,
    pub measured: BTreeMap<(Piece, Slot), Bound>,
    pub rejected: BTreeSet<(Piece, Slot)>,
}

impl LedgerContext {
    pub fn geometry(&self) -> LedgerGeometry {
        self.geometry.unwrap_or_else(LedgerGeometry::oracle)
    }

    pub fn book(&self) -> EnvelopeBook {
        let g = self.geometry();
        EnvelopeBook::resolve(&paper_envelopes(&g), &self.measured, &g, &self.rejected)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefCheck {
    pub term: Term,
    pub paper: f64,
    pub ours: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineReport {
    pub stage: StageId,
    pub label: String,
    pub basis: Basis,
    pub coefficients: Vec<CoefCheck>,
    /// Our recomputation with our own earlier outputs fed in.
    pub ours_fully_chained: Option<LinearBound>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecompute {
    pub stage: StageId,
    pub value: LinearBound,
    pub deriv: LinearBound,
    pub measured_slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub slack: f64,
    pub lines: Vec<LineReport>,
    /// Fully chained outputs of every stage that could be computed.
    pub stages: Vec<StageRecompute>,
    /// Stages that could not be recomputed, with the reason.
    pub unavailable: Vec<(StageId, String)>,
    pub pass: bool,
}

impl ReplayReport {
    pub fn failing(&self) -> impl Iterator<Item = &LineReport> {
        self.lines.iter().filter(|l| !l.pass)
    }
}

fn pick(forms: &StageForms, q: Quantity) -> Option<LinearBound> {
    match q {
        Quantity::Value => Some(forms.value.clone()),
        Quantity::Deriv => Some(forms.deriv.clone()),
        Quantity::Intermediate(name) => forms.intermediates.get(name).cloned(),
    }
}

/// Recomputes every published coefficient (restricted to `only` when given)
/// and checks `ours ≤ slack · paper` coefficient by coefficient. Chained
/// lines are checked stepwise: each stage starts from the published outputs
/// of the stages before it, so every display is judged on its own.
pub fn replay_paper_ledger(only: &[StageId], ctx: &LedgerContext, slack: f64) -> Result<ReplayReport> {
    let geom = ctx.geometry();
    let book = ctx.book();
    let published = paper_outputs();
    let mut local = BTreeMap::new();
    let mut unavailable = Vec::new();
    for stage in StageId::all() {
        match stage_forms(stage, &book, &geom) {
            Ok(f) => {
                local.insert(stage, f);
            }
            Err(e) => unavailable.push((stage, e.to_string())),
        }
    }
    let mut ours_gaps: BTreeMap<StageId, ChainedGaps> = BTreeMap::new();
    let mut full = BTreeMap::new();
    let mut stepwise = BTreeMap::new();
    for stage in StageId::all() {
        let Some(forms) = local.get(&stage) else { continue };
        // Stepwise priors: published where available, ours otherwise.
        let mut step_prior = ours_gaps.clone();
        for (id, g) in &published {
            step_prior.insert(*id, g.clone());
        }
        if let Ok(map) = start_map(stage, &geom, &step_prior) {
            stepwise.insert(stage, forms.subst_all(&map));
        }
        match start_map(stage, &geom, &ours_gaps) {
            Ok(map) => {
                let c = forms.subst_all(&map);
                ours_gaps.insert(stage, ChainedGaps { value: c.value.clone(), deriv: c.deriv.clone() });
                full.insert(stage, c);
            }
            Err(e) => unavailable.push((stage, e.to_string())),
        }
    }

    let mut lines = Vec::new();
    for pl in paper_lines() {
        if !only.is_empty() && !only.contains(&pl.stage) {
            continue;
        }
        let source = match pl.basis {
            Basis::Local => local.get(&pl.stage),
            Basis::Chained => stepwise.get(&pl.stage),
        };
        let Some(ours) = source.and_then(|f| pick(f, pl.quantity)) else {
            lines.push(LineReport {
                stage: pl.stage,
                label: pl.label.to_string(),
                basis: pl.basis,
                coefficients: Vec::new(),
                ours_fully_chained: None,
                pass: false,
            });
            continue;
        };
        let paper = LinearBound::from_pairs(&pl.paper);
        let mut terms: BTreeSet<Term> = paper.0.keys().copied().collect();
        terms.extend(ours.0.keys().copied());
        let coefficients: Vec<CoefCheck> = terms
            .into_iter()
            .map(|t| {
                let (p, o) = (paper.coeff(t), ours.coeff(t));
                CoefCheck { term: t, paper: p, ours: o, pass: o <= slack * p + 1e-12 }
            })
            .collect();
        let pass = coefficients.iter().all(|c| c.pass);
        lines.push(LineReport {
            stage: pl.stage,
            label: pl.label.to_string(),
            basis: pl.basis,
            coefficients,
            ours_fully_chained: full.get(&pl.stage).and_then(|f| pick(f, pl.quantity)),
            pass,
        });
    }

    let stages = full
        .iter()
        .filter(|(id, _)| only.is_empty() || only.contains(*id))
        .map(|(id, f)| {
            let slots = match id.kind {
                Kind::Geodesic => vec![Slot::Iu, Slot::Ip],
                Kind::Jacobi => Slot::ALL.to_vec(),
            };
            StageRecompute {
                stage: *id,
                value: f.value.clone(),
                deriv: f.deriv.clone(),
                measured_slots: slots
                    .into_iter()
                    .filter(|s| book.source(id.piece, *s) == Some(Source::Measured))
                    .collect(),
            }
        })
        .collect();
    unavailable.retain(|(id, _)| only.is_empty() || only.contains(id));
    unavailable.dedup_by(|a, b| a.0 == b.0);
    let pass = lines.iter().all(|l| l.pass) && unavailable.is_empty();
    Ok(ReplayReport { slack, lines, stages, unavailable, pass })
}
