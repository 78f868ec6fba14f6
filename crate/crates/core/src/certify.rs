//! End-to-end certification: from a located torus to the six kernel verdicts.
//!
//! The Grönwall ledger is run on the envelopes that survive the audit against
//! the numerical curve, and its Jacobi end gaps become the error budget of the
//! torus kernel checks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gronwall::envelope::{verify_envelopes, EnvelopeCheck, EnvelopeSpec};
use crate::gronwall::replay::{paper_envelopes, replay_paper_ledger, LedgerContext, ReplayReport};
use crate::gronwall::stages::{
    stage_forms, BoundLedger, GapBounds, Input, Kind, LedgerGeometry, LinearBound, Piece, Slot, Source, StageId,
    Term,
};
use crate::jacobi::{
    eigenfunction_residual, endpoint_matrix, integrate_mode, kernel_verdicts, measured_envelopes, mean_curvature_zeros,
    mode_cutoff, piece_segment, sturm_zero_check, torus_arcs, torus_jacobi, KernelReport, ModeCutoff, SturmConsistency,
    TorusJacobi,
};
use crate::ode::Tolerances;
use crate::shooting::{LocatedTorus, TorusCertificate, TorusSegments};
use crate::sphere::{sphere_kernel_check, SpherePiece, SphereVerdict};
use crate::verdict::Verdict;

pub const REPORT_SCHEMA: &str = "shrinker.verify/1";

/// Floor for `|U(0) − u(0)|`: the true torus height is only known to the
/// width of the final Φ bracket.
pub const U0_GAP_FLOOR: f64 = 1e-8;

/// Samples for the eigenfunction residual along each arc.
const EIGEN_SAMPLES: usize = 4000;
/// Arc-length spacing of the profile used for `H` zeros and the mode cutoff.
const PROFILE_SPACING: f64 = 2e-3;

/// Everything the later checks need, recomputed once from a certificate.
#[derive(Debug, Clone)]
pub struct TorusAnalysis {
    pub certificate: TorusCertificate,
    pub torus: LocatedTorus,
    pub segments: TorusSegments,
    pub jacobi: TorusJacobi,
    pub geometry: LedgerGeometry,
    pub tol: Tolerances,
}

impl TorusAnalysis {
    pub fn new(certificate: &TorusCertificate) -> Result<Self> {
        let torus = certificate.reconstruct()?;
        let tol = certificate.config.tolerances();
        let segments = torus.segments()?;
        let jacobi = torus_jacobi(&segments, tol)?;
        let geometry = LedgerGeometry::from_torus(&torus)?;
        Ok(Self { certificate: certificate.clone(), torus, segments, jacobi, geometry, tol })
    }

    /// Ledger inputs: segment residuals, Jacobi residuals and the start gap.
    pub fn ledger_inputs(&self) -> BTreeMap<Input, f64> {
        let mut m = BTreeMap::new();
        let b = &self.certificate.bracket;
        m.insert(Input::U0Gap, (b.a_plus - b.a_minus).abs().max(U0_GAP_FLOOR));
        for piece in Piece::ALL {
            m.insert(piece.eps(), piece_segment(&self.segments, piece).epsilon);
            m.insert(piece.delta(), self.jacobi.pieces[&piece].delta);
        }
        m
    }

    pub fn measured(&self) -> Result<BTreeMap<(Piece, Slot), crate::gronwall::Bound>> {
        measured_envelopes(&self.segments, &self.jacobi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeAuditEntry {
    pub piece: Piece,
    pub slot: Slot,
    pub check: EnvelopeCheck,
}

/// Checks every paper envelope against the numerical curve and Jacobi field.
pub fn audit_envelopes(an: &TorusAnalysis) -> Result<Vec<EnvelopeAuditEntry>> {
    let paper = paper_envelopes(&an.geometry);
    let mut out = Vec::new();
    for piece in Piece::ALL {
        let j = &an.jacobi.pieces[&piece];
        let field = |x: f64| j.at(x);
        let span = piece.span(&an.geometry);
        let (slots, specs): (Vec<Slot>, Vec<EnvelopeSpec>) = paper
            .iter()
            .filter(|((p, _), _)| *p == piece)
            .map(|((_, s), b)| {
                (*s, EnvelopeSpec::new(&format!("{}/{s:?}", piece.name()), s.integrand(), span, span.0, b.clone()))
            })
            .unzip();
        let checks = verify_envelopes(piece_segment(&an.segments, piece), &specs, Some(&field))?;
        out.extend(slots.into_iter().zip(checks).map(|(slot, check)| EnvelopeAuditEntry { piece, slot, check }));
    }
    Ok(out)
}

/// Ledger context whose envelopes are the audited paper ones, with failures
/// replaced by measured envelopes.
pub fn audited_context(an: &TorusAnalysis, audit: &[EnvelopeAuditEntry]) -> Result<LedgerContext> {
    let rejected: BTreeSet<(Piece, Slot)> =
        audit.iter().filter(|e| !e.check.pass).map(|e| (e.piece, e.slot)).collect();
    Ok(LedgerContext { geometry: Some(an.geometry), measured: an.measured()?, rejected })
}

/// Numeric ledger on the audited envelopes.
pub fn certified_ledger(an: &TorusAnalysis, ctx: &LedgerContext) -> Result<BoundLedger> {
    let mut ledger = BoundLedger::new(ctx.geometry(), ctx.book(), an.ledger_inputs());
    ledger.run_all()?;
    Ok(ledger)
}

/// Grönwall part of the m = 0 endpoint error at `p⁺`, as (value, isothermal
/// derivative) for the top and the bottom arc. The bottom arc continues past
/// the cylinder; that last stretch reuses the sphere-to-cylinder Jacobi forms
/// with the bottom gaps as start values.
pub fn jacobi_budget(an: &TorusAnalysis, ledger: &BoundLedger) -> Result<((f64, f64), (f64, f64))> {
    let y_s = an.geometry.y_sphere;
    let top = ledger.outputs[&StageId::new(Piece::TopX2ToSphere, Kind::Jacobi)];
    let bot_j = ledger.outputs[&StageId::new(Piece::BotX2ToCyl, Kind::Jacobi)];
    let bot_g = ledger.outputs[&StageId::new(Piece::BotX2ToCyl, Kind::Geodesic)];
    let forms = stage_forms(StageId::new(Piece::TopX2SphereToCyl, Kind::Jacobi), &ledger.envelopes, &an.geometry)?;
    let map = [
        (Term::StartValue, LinearBound::constant(bot_j.value)),
        (Term::StartDeriv, LinearBound::constant(bot_j.deriv)),
        (Term::GeoStartValue, LinearBound::constant(bot_g.value)),
        (Term::GeoStartDeriv, LinearBound::constant(bot_g.deriv)),
    ];
    let f = forms.subst_all(&map);
    let bot = GapBounds { value: f.value.eval(&ledger.inputs)?, deriv: f.deriv.eval(&ledger.inputs)? };
    // |dv/ds| ≤ |dv/dx₂| on an x₂-graph, and the isothermal derivative is y·dv/ds.
    Ok(((top.value, y_s * top.deriv), (bot.value, y_s * bot.deriv)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiReport {
    /// `(u₀(t_top), u₀'(t_top))`, derivative in the isothermal convention.
    pub top_endpoint: (f64, f64),
    pub bottom_endpoint: (f64, f64),
    pub det: f64,
    pub budget: ((f64, f64), (f64, f64)),
    pub cutoff: ModeCutoff,
    pub eigen_residual: f64,
    pub h_zeros: usize,
    pub top_zero_count: usize,
    pub bottom_zero_count: usize,
    pub sturm_top: SturmConsistency,
    pub kernels: Vec<KernelReport>,
}

pub fn jacobi_report(an: &TorusAnalysis, budget: ((f64, f64), (f64, f64))) -> Result<JacobiReport> {
    let (top, bot) = torus_arcs(&an.torus)?;
    let st = integrate_mode(&top, an.tol)?;
    let sb = integrate_mode(&bot, an.tol)?;
    let half = an.torus.half_profile(PROFILE_SPACING);
    let cutoff = mode_cutoff(&half)?;
    let h_zeros = mean_curvature_zeros(&half)?;
    let eigen_residual = eigenfunction_residual(&an.torus.top.solution, EIGEN_SAMPLES)?
        .max(eigenfunction_residual(&an.torus.bottom.solution, EIGEN_SAMPLES)?);
    let kernels = kernel_verdicts(&an.torus, an.tol, &cutoff, budget)?;
    Ok(JacobiReport {
        top_endpoint: (st.endpoint_value, st.endpoint_derivative),
        bottom_endpoint: (sb.endpoint_value, sb.endpoint_derivative),
        det: endpoint_matrix(&st, &sb).det,
        budget,
        cutoff,
        eigen_residual,
        h_zeros,
        top_zero_count: st.zero_count,
        bottom_zero_count: sb.zero_count,
        sturm_top: sturm_zero_check(&st, h_zeros),
        kernels,
    })
}

pub fn sphere_verdicts(angle: f64) -> Result<Vec<SphereVerdict>> {
    [SpherePiece::S1, SpherePiece::S3, SpherePiece::S4].into_iter().map(|p| sphere_kernel_check(p, angle)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub piece: String,
    pub verdict: Verdict,
    /// Decisive quantity of the m = 0 (or only) check.
    pub quantity: f64,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub inputs: BTreeMap<Input, f64>,
    pub outputs: BTreeMap<String, GapBounds>,
    pub envelope_sources: BTreeMap<String, Source>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: String,
    pub certificate: TorusCertificate,
    pub envelopes: Vec<EnvelopeAuditEntry>,
    pub ledger: LedgerSummary,
    pub replay: ReplayReport,
    pub jacobi: JacobiReport,
    pub sphere: Vec<SphereVerdict>,
    pub kernels: Vec<KernelSummary>,
    pub trivial_count: usize,
    pub all_trivial: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn ledger_summary(ledger: &BoundLedger) -> LedgerSummary {
    let mut envelope_sources = BTreeMap::new();
    for piece in Piece::ALL {
        for slot in Slot::ALL {
            if let Some(s) = ledger.envelopes.source(piece, slot) {
                envelope_sources.insert(format!("{}/{slot:?}", piece.name()), s);
            }
        }
    }
    LedgerSummary {
        inputs: ledger.inputs.clone(),
        outputs: ledger.outputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        envelope_sources,
    }
}

/// Runs every check on a torus certificate.
pub fn verify_all(certificate: &TorusCertificate, slack: f64, stages: &[StageId]) -> Result<VerifyReport> {
    let an = TorusAnalysis::new(certificate)?;
    let audit = audit_envelopes(&an)?;
    let ctx = audited_context(&an, &audit)?;
    let ledger = certified_ledger(&an, &ctx)?;
    let replay = replay_paper_ledger(stages, &ctx, slack)?;
    let budget = jacobi_budget(&an, &ledger)?;
    let jacobi = jacobi_report(&an, budget)?;
    let sphere = sphere_verdicts(certificate.sphere.angle)?;

    let mut kernels: Vec<KernelSummary> = sphere
        .iter()
        .map(|v| KernelSummary {
            piece: format!("{:?}", v.piece),
            verdict: v.verdict,
            quantity: v.quantity,
            budget: v.error_budget,
        })
        .collect();
    kernels.extend(jacobi.kernels.iter().map(|k| KernelSummary {
        piece: format!("{:?}", k.piece),
        verdict: k.verdict,
        quantity: k.modes.first().map_or(f64::NAN, |m| m.quantity),
        budget: k.modes.first().map_or(f64::NAN, |m| m.budget),
    }));
    kernels.sort_by(|a, b| a.piece.cmp(&b.piece));
    let trivial_count = kernels.iter().filter(|k| k.verdict.is_trivial()).count();
    Ok(VerifyReport {
        schema: REPORT_SCHEMA.to_string(),
        certificate: certificate.clone(),
        envelopes: audit,
        ledger: ledger_summary(&ledger),
        replay,
        jacobi,
        sphere,
        all_trivial: trivial_count == kernels.len() && kernels.len() == 6,
        trivial_count,
        kernels,
    })
}
