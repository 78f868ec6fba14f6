use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::envelope::{Bound, EnvelopeSpec, Integrand};
use super::interval::{upper_integral, Cumulative, Grid, Interval};
use crate::error::{Error, Result};
use crate::geometry::{Chart, CYLINDER_RADIUS};
use crate::shooting::{LocatedTorus, BOT_X1_END, TOP_X1_END};

/// Base quantities every ledger output is linear in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    /// Gap between the true and numerical starting heights.
    U0Gap,
    Eps1Top,
    Eps2Top,
    Eps3Top,
    Eps1Bot,
    Eps2Bot,
    Delta1Top,
    Delta2Top,
    Delta3Top,
    Delta1Bot,
    Delta2Bot,
}

impl Input {
    pub const ALL: [Input; 11] = [
        Input::U0Gap,
        Input::Eps1Top,
        Input::Eps2Top,
        Input::Eps3Top,
        Input::Eps1Bot,
        Input::Eps2Bot,
        Input::Delta1Top,
        Input::Delta2Top,
        Input::Delta3Top,
        Input::Delta1Bot,
        Input::Delta2Bot,
    ];
}

/// A coefficient key: a base input, a stage-local start symbol, or the unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    In(Input),
    /// Value gap handed to this stage (`G₀` for Jacobi, `D₀` for geodesic).
    StartValue,
    /// Derivative gap handed to this stage.
    StartDeriv,
    /// Geodesic value gap at the start of a Jacobi stage's piece.
    GeoStartValue,
    GeoStartDeriv,
    One,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::In(i) => write!(f, "{}", serde_json::to_value(i).unwrap().as_str().unwrap()),
            Term::StartValue => f.write_str("start_value"),
            Term::StartDeriv => f.write_str("start_deriv"),
            Term::GeoStartValue => f.write_str("geo_start_value"),
            Term::GeoStartDeriv => f.write_str("geo_start_deriv"),
            Term::One => f.write_str("1"),
        }
    }
}

impl std::str::FromStr for Term {
    type Err = Error;
    fn from_str(s: &str) -> Result<Term> {
        Ok(match s {
            "start_value" => Term::StartValue,
            "start_deriv" => Term::StartDeriv,
            "geo_start_value" => Term::GeoStartValue,
            "geo_start_deriv" => Term::GeoStartDeriv,
            "1" => Term::One,
            other => Term::In(
                serde_json::from_value(serde_json::Value::String(other.to_string()))
                    .map_err(|_| Error::Config(format!("unknown ledger term '{other}'")))?,
            ),
        })
    }
}

/// `Σ cₜ · t` over terms; zero coefficients are not stored. Serialized as a
/// map from term names to coefficients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "BTreeMap<String, f64>", try_from = "BTreeMap<String, f64>")]
pub struct LinearBound(pub BTreeMap<Term, f64>);

impl From<LinearBound> for BTreeMap<String, f64> {
    fn from(b: LinearBound) -> Self {
        b.0.into_iter().map(|(t, c)| (t.to_string(), c)).collect()
    }
}

impl TryFrom<BTreeMap<String, f64>> for LinearBound {
    type Error = Error;
    fn try_from(m: BTreeMap<String, f64>) -> Result<Self> {
        m.into_iter().map(|(k, c)| Ok((k.parse()?, c))).collect::<Result<_>>().map(LinearBound)
    }
}

impl LinearBound {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn term(t: Term) -> Self {
        Self::scaled(t, 1.0)
    }

    pub fn scaled(t: Term, c: f64) -> Self {
        let mut m = BTreeMap::new();
        if c != 0.0 {
            m.insert(t, c);
        }
        Self(m)
    }

    pub fn constant(c: f64) -> Self {
        Self::scaled(Term::One, c)
    }

    pub fn from_pairs(pairs: &[(Term, f64)]) -> Self {
        pairs.iter().fold(Self::zero(), |acc, &(t, c)| acc.plus(&Self::scaled(t, c)))
    }

    pub fn coeff(&self, t: Term) -> f64 {
        self.0.get(&t).copied().unwrap_or(0.0)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self(self.0.iter().map(|(t, c)| (*t, c * k)).filter(|(_, c)| *c != 0.0).collect())
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut m = self.0.clone();
        for (t, c) in &other.0 {
            *m.entry(*t).or_insert(0.0) += c;
        }
        m.retain(|_, c| *c != 0.0);
        Self(m)
    }

    /// Replaces the symbol `t` by `by`.
    pub fn subst(&self, t: Term, by: &LinearBound) -> Self {
        match self.0.get(&t) {
            None => self.clone(),
            Some(&c) => {
                let mut rest = self.clone();
                rest.0.remove(&t);
                rest.plus(&by.scale(c))
            }
        }
    }

    pub fn subst_all(&self, map: &[(Term, LinearBound)]) -> Self {
        map.iter().fold(self.clone(), |acc, (t, by)| acc.subst(*t, by))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.values().all(|c| *c >= 0.0)
    }

    /// Numeric value; every term must be a base input present in `inputs`.
    pub fn eval(&self, inputs: &BTreeMap<Input, f64>) -> Result<f64> {
        let mut acc = 0.0;
        for (t, c) in &self.0 {
            let x = match t {
                Term::One => 1.0,
                Term::In(i) => *inputs
                    .get(i)
                    .ok_or_else(|| Error::Precondition(format!("ledger input {t} is not set")))?,
                _ => return Err(Error::Precondition(format!("unresolved ledger symbol {t}"))),
            };
            acc += c * x;
        }
        Ok(acc)
    }
}

impl fmt::Display for LinearBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("0");
        }
        let parts: Vec<String> = self.0.iter().map(|(t, c)| format!("{c:.6}·{t}")).collect();
        f.write_str(&parts.join(" + "))
    }
}

/// The graph pieces over which the ledgers run, in chain order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Piece {
    TopX1,
    TopX2ToSphere,
    TopX2SphereToCyl,
    BotX1,
    BotX2ToCyl,
}

impl Piece {
    pub const ALL: [Piece; 5] =
        [Piece::TopX1, Piece::TopX2ToSphere, Piece::TopX2SphereToCyl, Piece::BotX1, Piece::BotX2ToCyl];

    pub fn chart(self) -> Chart {
        match self {
            Piece::TopX1 | Piece::BotX1 => Chart::GraphX1,
            _ => Chart::GraphX2,
        }
    }

    pub fn prev(self) -> Option<Piece> {
        match self {
            Piece::TopX2ToSphere => Some(Piece::TopX1),
            Piece::TopX2SphereToCyl => Some(Piece::TopX2ToSphere),
            Piece::BotX2ToCyl => Some(Piece::BotX1),
            _ => None,
        }
    }

    pub fn eps(self) -> Input {
        match self {
            Piece::TopX1 => Input::Eps1Top,
            Piece::TopX2ToSphere => Input::Eps2Top,
            Piece::TopX2SphereToCyl => Input::Eps3Top,
            Piece::BotX1 => Input::Eps1Bot,
            Piece::BotX2ToCyl => Input::Eps2Bot,
        }
    }

    pub fn delta(self) -> Input {
        match self {
            Piece::TopX1 => Input::Delta1Top,
            Piece::TopX2ToSphere => Input::Delta2Top,
            Piece::TopX2SphereToCyl => Input::Delta3Top,
            Piece::BotX1 => Input::Delta1Bot,
            Piece::BotX2ToCyl => Input::Delta2Bot,
        }
    }

    /// Start and end of the piece in its chart coordinate.
    pub fn span(self, g: &LedgerGeometry) -> (f64, f64) {
        match self {
            Piece::TopX1 => (0.0, TOP_X1_END),
            Piece::TopX2ToSphere => (g.u_top, g.y_sphere),
            Piece::TopX2SphereToCyl => (g.y_sphere, CYLINDER_RADIUS),
            Piece::BotX1 => (0.0, BOT_X1_END),
            Piece::BotX2ToCyl => (g.a_bot, CYLINDER_RADIUS),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Piece::TopX1 => "top_x1",
            Piece::TopX2ToSphere => "top_x2_sphere",
            Piece::TopX2SphereToCyl => "top_x2_cyl",
            Piece::BotX1 => "bot_x1",
            Piece::BotX2ToCyl => "bot_x2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Geodesic,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StageId {
    pub piece: Piece,
    pub kind: Kind,
}

impl StageId {
    pub fn new(piece: Piece, kind: Kind) -> Self {
        Self { piece, kind }
    }

    /// Every stage in an order that respects the dependencies.
    pub fn all() -> Vec<StageId> {
        let mut v = Vec::new();
        for kind in [Kind::Geodesic, Kind::Jacobi] {
            for p in Piece::ALL {
                v.push(StageId::new(p, kind));
            }
        }
        v
    }

    pub fn dependencies(self) -> Vec<StageId> {
        let Some(prev) = self.piece.prev() else { return Vec::new() };
        match self.kind {
            Kind::Geodesic => vec![StageId::new(prev, Kind::Geodesic)],
            Kind::Jacobi => vec![StageId::new(prev, Kind::Geodesic), StageId::new(prev, Kind::Jacobi)],
        }
    }

    pub fn parse(s: &str) -> Result<StageId> {
        let (p, k) = s.split_once('/').unwrap_or((s, "geodesic"));
        let piece = Piece::ALL
            .into_iter()
            .find(|x| x.name() == p)
            .ok_or_else(|| Error::Config(format!("unknown piece '{p}'")))?;
        let kind = match k {
            "geodesic" => Kind::Geodesic,
            "jacobi" => Kind::Jacobi,
            _ => return Err(Error::Config(format!("unknown stage kind '{k}'"))),
        };
        Ok(StageId::new(piece, kind))
    }
}

/// Stages selected by a filter: `top_x1/jacobi`, a piece name (both kinds),
/// or the CamelCase piece tag (`TopX1`).
pub fn select_stages(filter: &str) -> Result<Vec<StageId>> {
    if filter.contains('/') {
        return Ok(vec![StageId::parse(filter)?]);
    }
    let piece = Piece::ALL
        .into_iter()
        .find(|p| p.name() == filter || format!("{p:?}") == filter)
        .ok_or_else(|| Error::Config(format!("unknown stage '{filter}'")))?;
    Ok(vec![StageId::new(piece, Kind::Geodesic), StageId::new(piece, Kind::Jacobi)])
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            Kind::Geodesic => "geodesic",
            Kind::Jacobi => "jacobi",
        };
        write!(f, "{}/{}", self.piece.name(), k)
    }
}

/// Handoff heights and slopes of the located torus the ledgers are built on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerGeometry {
    /// `u_T(3/5)`.
    pub u_top: f64,
    /// Height where the top arc meets the radius-2 sphere.
    pub y_sphere: f64,
    /// `u_B(1/2)`.
    pub a_bot: f64,
    pub slope_top: f64,
    pub slope_bot: f64,
}

impl LedgerGeometry {
    /// Values of an independent high-accuracy integration.
    pub fn oracle() -> Self {
        Self {
            u_top: 3.0317032866425477,
            y_sphere: 1.7828649720119254,
            a_bot: 0.7180219262867511,
            slope_top: 1.1158618404948475,
            slope_bot: 1.2221827672472452,
        }
    }

    pub fn from_torus(t: &LocatedTorus) -> Result<Self> {
        let seg = t.segments()?;
        let (u_top, p_top, _) = seg.top_x1.eval(TOP_X1_END);
        let (a_bot, p_bot, _) = seg.bot_x1.eval(BOT_X1_END);
        Ok(Self {
            u_top,
            y_sphere: t.sphere_crossing()?.p_plus.1,
            a_bot,
            slope_top: p_top.abs(),
            slope_bot: p_bot.abs(),
        })
    }

    /// Factors applied to the (value, derivative) gaps handed into `piece`.
    pub fn conversion(&self, piece: Piece, kind: Kind) -> (f64, f64) {
        match (piece, kind) {
            (Piece::TopX2ToSphere, Kind::Geodesic) => (10.0 / 11.0, (10.0f64 / 11.0).powi(2)),
            (Piece::BotX2ToCyl, Kind::Geodesic) => (10.0 / 12.0, (10.0f64 / 12.0).powi(2)),
            (Piece::TopX2ToSphere, Kind::Jacobi) => (1.0, 1.0 / self.slope_top),
            (Piece::BotX2ToCyl, Kind::Jacobi) => (1.0, 1.0 / self.slope_bot),
            _ => (1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Iu,
    Ip,
    Pint,
    Qint,
    W1,
    W2,
}

impl Slot {
    pub const ALL: [Slot; 6] = [Slot::Iu, Slot::Ip, Slot::Pint, Slot::Qint, Slot::W1, Slot::W2];

    pub fn integrand(self) -> Integrand {
        match self {
            Slot::Iu => Integrand::GeodesicU,
            Slot::Ip => Integrand::GeodesicP,
            Slot::Pint => Integrand::CoefP,
            Slot::Qint => Integrand::CoefQ,
            Slot::W1 => Integrand::W1,
            Slot::W2 => Integrand::W2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Paper,
    Measured,
}

/// The envelope functions chosen for every piece and slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeBook {
    pub entries: BTreeMap<(Piece, Slot), (Bound, Source)>,
}

impl EnvelopeBook {
    pub fn get(&self, piece: Piece, slot: Slot) -> Result<&Bound> {
        self.entries.get(&(piece, slot)).map(|e| &e.0).ok_or_else(|| {
            Error::Precondition(format!("no {slot:?} envelope for piece {}", piece.name()))
        })
    }

    pub fn source(&self, piece: Piece, slot: Slot) -> Option<Source> {
        self.entries.get(&(piece, slot)).map(|e| e.1)
    }

    /// Paper envelopes where they exist, are nonnegative on their piece and
    /// are not in `rejected`; measured ones otherwise.
    pub fn resolve(
        paper: &BTreeMap<(Piece, Slot), Bound>,
        measured: &BTreeMap<(Piece, Slot), Bound>,
        geom: &LedgerGeometry,
        rejected: &BTreeSet<(Piece, Slot)>,
    ) -> Self {
        let mut entries = BTreeMap::new();
        for piece in Piece::ALL {
            for slot in Slot::ALL {
                let key = (piece, slot);
                let usable = paper
                    .get(&key)
                    .filter(|b| !rejected.contains(&key) && nonnegative_on(b, piece.span(geom)));
                if let Some(b) = usable {
                    entries.insert(key, (b.clone(), Source::Paper));
                } else if let Some(b) = measured.get(&key) {
                    entries.insert(key, (b.clone(), Source::Measured));
                }
            }
        }
        Self { entries }
    }

    pub fn specs(&self, piece: Piece, geom: &LedgerGeometry) -> Vec<EnvelopeSpec> {
        let (a, b) = piece.span(geom);
        Slot::ALL
            .into_iter()
            .filter_map(|slot| {
                self.entries.get(&(piece, slot)).map(|(bound, _)| {
                    EnvelopeSpec::new(
                        &format!("{}/{:?}", piece.name(), slot),
                        slot.integrand(),
                        (a, b),
                        a,
                        bound.clone(),
                    )
                })
            })
            .collect()
    }
}

pub fn nonnegative_on(b: &Bound, (x0, x1): (f64, f64)) -> bool {
    let (lo, hi) = (x0.min(x1), x0.max(x1));
    // Rounding-level negatives (a cumulative bound at its anchor) are fine.
    (0..=400).all(|i| b.at(lo + (hi - lo) * i as f64 / 400.0) >= -ROUNDING_SLACK)
}

pub const LEDGER_CELLS: usize = 4000;

const ROUNDING_SLACK: f64 = 1e-12;

/// A stage's outputs as linear forms in its start symbols and own inputs,
/// with named intermediates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageForms {
    pub value: LinearBound,
    pub deriv: LinearBound,
    pub intermediates: BTreeMap<String, LinearBound>,
}

impl StageForms {
    pub fn subst_all(&self, map: &[(Term, LinearBound)]) -> Self {
        Self {
            value: self.value.subst_all(map),
            deriv: self.deriv.subst_all(map),
            intermediates: self.intermediates.iter().map(|(k, v)| (k.clone(), v.subst_all(map))).collect(),
        }
    }
}

struct Frame<'a> {
    x0: f64,
    dir: f64,
    len: f64,
    grid: Grid,
    iu: &'a Bound,
    ip: &'a Bound,
}

impl<'a> Frame<'a> {
    fn new(piece: Piece, book: &'a EnvelopeBook, geom: &LedgerGeometry) -> Result<Self> {
        let (x0, x1) = piece.span(geom);
        let len = (x1 - x0).abs();
        Ok(Self {
            x0,
            dir: (x1 - x0).signum(),
            len,
            grid: Grid::new(len, LEDGER_CELLS),
            iu: book.get(piece, Slot::Iu)?,
            ip: book.get(piece, Slot::Ip)?,
        })
    }

    fn x(&self, s: Interval) -> Interval {
        if self.dir >= 0.0 {
            s + self.x0
        } else {
            Interval::point(self.x0) - s
        }
    }

    fn iu(&self, s: Interval) -> Interval {
        self.iu.eval(self.x(s))
    }

    /// `exp(Iₚ + σ Iᵤ)`.
    fn geo_exp(&self, s: Interval) -> Interval {
        (self.ip.eval(self.x(s)) + s * self.iu(s)).exp()
    }
}

/// Geodesic stage: the gap `ψ = |F' − f'|` obeys `ψ ≤ α e^{B}` with
/// `α(σ) = Iᵤ(σ) D₀ + D₁ + εσ` and `B = Iₚ + σIᵤ`; the value gap adds `∫ψ`.
pub fn geodesic_forms(piece: Piece, book: &EnvelopeBook, geom: &LedgerGeometry) -> Result<StageForms> {
    let fr = Frame::new(piece, book, geom)?;
    let eps = Term::In(piece.eps());
    let end = Interval::point(fr.len);
    let e_end = fr.geo_exp(end).hi;
    let iu_end = fr.iu(end).hi;
    let ju = upper_integral(&fr.grid, |s| fr.iu(s) * fr.geo_exp(s));
    let j1 = upper_integral(&fr.grid, |s| fr.geo_exp(s));
    let js = upper_integral(&fr.grid, |s| s * fr.geo_exp(s));
    let deriv = LinearBound::from_pairs(&[
        (Term::StartValue, e_end * iu_end),
        (Term::StartDeriv, e_end),
        (eps, e_end * fr.len),
    ]);
    let value = LinearBound::from_pairs(&[(Term::StartValue, 1.0 + ju), (Term::StartDeriv, j1), (eps, js)]);
    let mut intermediates = BTreeMap::new();
    intermediates.insert("exp_end".into(), LinearBound::constant(e_end));
    intermediates.insert("iu_end".into(), LinearBound::constant(iu_end));
    intermediates.insert("length".into(), LinearBound::constant(fr.len));
    Ok(StageForms { value, deriv, intermediates })
}

/// Jacobi stage: the derivative gap obeys
/// `|G' − g'| ≤ [Q̄ G₀ + ∫W₁ψ + ∫W₂|F − f| + δσ + G₁] e^{P̄ + σQ̄}`
/// with `ψ` and `|F − f|` from the companion geodesic stage; the value gap
/// adds `∫` of that bound.
pub fn jacobi_forms(piece: Piece, book: &EnvelopeBook, geom: &LedgerGeometry) -> Result<StageForms> {
    let fr = Frame::new(piece, book, geom)?;
    let (pint, qint) = (book.get(piece, Slot::Pint)?, book.get(piece, Slot::Qint)?);
    let (w1, w2) = (book.get(piece, Slot::W1)?, book.get(piece, Slot::W2)?);
    let eps = Term::In(piece.eps());
    let delta = Term::In(piece.delta());
    let g = &fr.grid;

    // Geodesic derivative gap split by coefficient: ψ = Iᵤe·D₀ + e·D₁ + σe·ε.
    let geo_terms = [Term::GeoStartValue, Term::GeoStartDeriv, eps];
    let psi = |k: usize, s: Interval| -> Interval {
        let e = fr.geo_exp(s);
        match k {
            0 => fr.iu(s) * e,
            1 => e,
            _ => s * e,
        }
    };
    let cum_psi: Vec<Cumulative> = (0..3).map(|k| Cumulative::new(g, |s| psi(k, s))).collect();
    // |F − f| ≤ D₀ + ∫ψ.
    let fgap = |k: usize, s: Interval| -> Interval {
        let c = cum_psi[k].eval(s);
        if k == 0 {
            c + 1.0
        } else {
            c
        }
    };
    let cw1: Vec<Cumulative> =
        (0..3).map(|k| Cumulative::new(g, |s| w1.eval(fr.x(s)).max0() * psi(k, s))).collect();
    let cw2: Vec<Cumulative> =
        (0..3).map(|k| Cumulative::new(g, |s| w2.eval(fr.x(s)).max0() * fgap(k, s))).collect();

    let jexp = |s: Interval| (pint.eval(fr.x(s)) + s * qint.eval(fr.x(s))).exp();
    let end = Interval::point(fr.len);
    let ex_end = jexp(end).hi;
    let q_end = qint.eval(fr.x(end)).hi;

    let mut w1_int = LinearBound::zero();
    let mut w2_int = LinearBound::zero();
    let mut bracket = LinearBound::from_pairs(&[
        (Term::StartValue, q_end),
        (Term::StartDeriv, 1.0),
        (delta, fr.len),
    ]);
    let mut value = LinearBound::from_pairs(&[
        (Term::StartValue, 1.0 + upper_integral(g, |s| qint.eval(fr.x(s)) * jexp(s))),
        (Term::StartDeriv, upper_integral(g, jexp)),
        (delta, upper_integral(g, |s| s * jexp(s))),
    ]);
    for (k, t) in geo_terms.iter().enumerate() {
        w1_int = w1_int.plus(&LinearBound::scaled(*t, cw1[k].total()));
        w2_int = w2_int.plus(&LinearBound::scaled(*t, cw2[k].total()));
        bracket = bracket.plus(&LinearBound::scaled(*t, cw1[k].total() + cw2[k].total()));
        let v = upper_integral(g, |s| (cw1[k].eval(s) + cw2[k].eval(s)) * jexp(s));
        value = value.plus(&LinearBound::scaled(*t, v));
    }
    let deriv = bracket.scale(ex_end);
    let mut intermediates = BTreeMap::new();
    intermediates.insert("w1_integral".into(), w1_int);
    intermediates.insert("w2_integral".into(), w2_int);
    intermediates.insert("bracket".into(), bracket);
    intermediates.insert("exp_end".into(), LinearBound::constant(ex_end));
    Ok(StageForms { value, deriv, intermediates })
}

pub fn stage_forms(stage: StageId, book: &EnvelopeBook, geom: &LedgerGeometry) -> Result<StageForms> {
    match stage.kind {
        Kind::Geodesic => geodesic_forms(stage.piece, book, geom),
        Kind::Jacobi => jacobi_forms(stage.piece, book, geom),
    }
}

/// Value and derivative gap at the end of a stage, as linear forms in the
/// base inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainedGaps {
    pub value: LinearBound,
    pub deriv: LinearBound,
}

/// Symbol substitutions that feed the outputs of earlier stages into
/// `stage`. `prior` maps a finished stage to its end gaps.
pub fn start_map(
    stage: StageId,
    geom: &LedgerGeometry,
    prior: &BTreeMap<StageId, ChainedGaps>,
) -> Result<Vec<(Term, LinearBound)>> {
    let need = |id: StageId| -> Result<&ChainedGaps> {
        prior.get(&id).ok_or_else(|| Error::Dependency { stage: stage.to_string(), missing: id.to_string() })
    };
    let geo_start = |piece: Piece| -> Result<(LinearBound, LinearBound)> {
        match piece.prev() {
            None => Ok((LinearBound::term(Term::In(Input::U0Gap)), LinearBound::zero())),
            Some(prev) => {
                let g = need(StageId::new(prev, Kind::Geodesic))?;
                let (cv, cd) = geom.conversion(piece, Kind::Geodesic);
                Ok((g.value.scale(cv), g.deriv.scale(cd)))
            }
        }
    };
    let (gv, gd) = geo_start(stage.piece)?;
    Ok(match stage.kind {
        Kind::Geodesic => vec![(Term::StartValue, gv), (Term::StartDeriv, gd)],
        Kind::Jacobi => {
            let (jv, jd) = match stage.piece.prev() {
                None => (LinearBound::zero(), LinearBound::zero()),
                Some(prev) => {
                    let j = need(StageId::new(prev, Kind::Jacobi))?;
                    let (cv, cd) = geom.conversion(stage.piece, Kind::Jacobi);
                    (j.value.scale(cv), j.deriv.scale(cd))
                }
            };
            vec![
                (Term::GeoStartValue, gv),
                (Term::GeoStartDeriv, gd),
                (Term::StartValue, jv),
                (Term::StartDeriv, jd),
            ]
        }
    })
}

/// Runs every stage in dependency order and returns the chained forms.
pub fn chain_all(book: &EnvelopeBook, geom: &LedgerGeometry) -> Result<BTreeMap<StageId, StageForms>> {
    let mut gaps = BTreeMap::new();
    let mut out = BTreeMap::new();
    for stage in StageId::all() {
        let local = stage_forms(stage, book, geom)?;
        let chained = local.subst_all(&start_map(stage, geom, &gaps)?);
        gaps.insert(stage, ChainedGaps { value: chained.value.clone(), deriv: chained.deriv.clone() });
        out.insert(stage, chained);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBounds {
    pub value: f64,
    pub deriv: f64,
}

/// Numeric ledger: base inputs plus the end gaps of the stages run so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundLedger {
    pub geometry: LedgerGeometry,
    pub envelopes: EnvelopeBook,
    pub inputs: BTreeMap<Input, f64>,
    pub outputs: BTreeMap<StageId, GapBounds>,
}

impl BoundLedger {
    pub fn new(geometry: LedgerGeometry, envelopes: EnvelopeBook, inputs: BTreeMap<Input, f64>) -> Self {
        Self { geometry, envelopes, inputs, outputs: BTreeMap::new() }
    }

    pub fn run_all(&mut self) -> Result<()> {
        for stage in StageId::all() {
            propagate_stage(self, stage)?;
        }
        Ok(())
    }
}

/// Propagates one stage. The stages it consumes must already be in
/// `ledger.outputs`.
pub fn propagate_stage(ledger: &mut BoundLedger, stage: StageId) -> Result<GapBounds> {
    let prior: BTreeMap<StageId, ChainedGaps> = ledger
        .outputs
        .iter()
        .map(|(id, g)| {
            (*id, ChainedGaps { value: LinearBound::constant(g.value), deriv: LinearBound::constant(g.deriv) })
        })
        .collect();
    let map = start_map(stage, &ledger.geometry, &prior)?;
    let forms = stage_forms(stage, &ledger.envelopes, &ledger.geometry)?.subst_all(&map);
    let out = GapBounds { value: forms.value.eval(&ledger.inputs)?, deriv: forms.deriv.eval(&ledger.inputs)? };
    ledger.outputs.insert(stage, out);
    Ok(out)
}
