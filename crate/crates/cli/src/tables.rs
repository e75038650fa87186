//! Human-readable reports, 9 significant digits.

use std::fmt::Write as _;

use mjgame_core::game::{PlayerBound, UccCertificate};
use mjgame_core::model::ValidationReport;
use mjgame_core::output::fmt9;
use mjgame_core::riccati::Status;

use crate::commands::{ResidualSummary, RiccatiSummary, SaddleSummary, SolveSummary};

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

pub fn validation(name: &str, report: &ValidationReport) -> String {
    let mut s = String::new();
    if report.is_valid() {
        let _ = writeln!(s, "{name}: valid");
    } else {
        let _ = writeln!(s, "{name}: {} violation(s)", report.violations.len());
        for v in &report.violations {
            let _ = writeln!(s, "  {v}");
        }
    }
    s
}

fn bound_row(s: &mut String, player: u8, b: &PlayerBound) {
    let _ = writeln!(
        s,
        "  player {player}  c {:>14}  gamma {:>14}  mu {:>14}  n {:>14}  lambda {:>14}  {}",
        fmt9(b.c),
        fmt9(b.gamma),
        fmt9(b.mu),
        fmt9(b.n),
        fmt9(b.lambda),
        verdict(b.certified)
    );
}

pub fn certificate(c: &UccCertificate) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "certificate: a = {} (computed {}), T = {}, weight = {}",
        fmt9(c.a),
        fmt9(c.a_computed),
        fmt9(c.horizon),
        fmt9(c.weight)
    );
    bound_row(&mut s, 1, &c.first);
    bound_row(&mut s, 2, &c.second);
    s
}

fn status_line(status: &Status) -> String {
    match status {
        Status::Solved => "solved".into(),
        Status::ConstraintViolated { t, regime, player, margin } => format!(
            "constraint violated at t = {}, regime {regime}, player {player} (margin {})",
            fmt9(*t),
            fmt9(*margin)
        ),
        Status::BlowUp { t } => format!("blow-up at t = {}", fmt9(*t)),
    }
}

fn riccati_row(s: &mut String, label: &str, r: &RiccatiSummary) {
    let residual = r.residual.map_or_else(|| "-".to_string(), fmt9);
    let _ = writeln!(
        s,
        "  {label:<10} {}  min delta1 {}  min delta2 {}  residual {residual}",
        status_line(&r.status),
        fmt9(r.min_delta1),
        fmt9(r.min_delta2)
    );
}

pub fn solve(summary: &SolveSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "riccati: K = {}, T = {}, L = {}, delta_min = {}",
        summary.steps,
        fmt9(summary.horizon),
        summary.regimes,
        fmt9(summary.options.delta_min)
    );
    riccati_row(&mut s, "game", &summary.game);
    for (k, r) in summary.single_player.iter().enumerate() {
        riccati_row(&mut s, &format!("player {}", k + 1), r);
    }
    if let Some(c) = &summary.comparison {
        let _ = writeln!(
            s,
            "  comparison  min eig(P - P1) {}  min eig(P2 - P) {}  {}",
            fmt9(c.lower_margin),
            fmt9(c.upper_margin),
            verdict(c.pass)
        );
    } else if summary.game.status == Status::Solved {
        let _ = writeln!(s, "  comparison  unavailable (a single-player problem has no solution)  FAIL");
    }
    if let (Some(o), Some(g)) = (summary.offset_residual, summary.gain_residual) {
        let _ = writeln!(s, "  strategy    gain residual {}  offset residual {}", fmt9(g), fmt9(o));
    }
    s
}

pub fn residual(r: &ResidualSummary) -> String {
    format!(
        "stationarity: {} paths, worst residual / (1 + sup|X|) = {} (tol {})  {}\n",
        r.paths,
        fmt9(r.worst_ratio),
        fmt9(r.tolerance),
        verdict(r.pass)
    )
}

pub fn saddle(summary: &SaddleSummary) -> String {
    let r = &summary.report;
    let mut s = String::new();
    let _ = writeln!(s, "saddle check: {} paths, seed {}, x = {:?}, regime {}", r.paths, r.seed, r.x, r.regime);
    if summary.gain_shift != 0.0 {
        let _ = writeln!(s, "  player 1 gain shifted by {}", fmt9(summary.gain_shift));
    }
    let _ = writeln!(
        s,
        "  center J = {} +/- {}   value {}   {}",
        fmt9(r.center.mean),
        fmt9(r.center.std_error),
        fmt9(summary.value),
        verdict(summary.center_agrees)
    );
    let _ = writeln!(s, "  {:>6} {:>4} {:>16} {:>16} {:>16} {:>10}", "player", "arm", "J(arm)", "J(arm) - J*", "se", "");
    for a in &r.arms {
        let _ = writeln!(
            s,
            "  {:>6} {:>4} {:>16} {:>16} {:>16} {:>10}",
            a.player,
            a.index + 1,
            fmt9(a.cost.mean),
            fmt9(a.difference.mean),
            fmt9(a.difference.std_error),
            verdict(a.pass)
        );
    }
    let _ = writeln!(s, "  saddle inequalities: {}", verdict(summary.pass));
    s
}
