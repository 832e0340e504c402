//! Subcommands. Each returns the text to print or write, so the binary only
//! routes output.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::Complex;
use qgraph_core::chain::{
    band_gaps, band_structure, bloch_multipliers, build_candidate, closed_chain_spectrum,
    modulus_continuity_defect, sample_eigenfunction, ClosedChainOptions, ClosedSpectrum,
};
use qgraph_core::extensions::{blockwise_spectrum, BlockSpectrum, SpectralOptions};
use qgraph_core::graph::EdgeCoefficients;
use qgraph_core::reference::{
    compare_formula_to_oracle, oracle_matching_defects, psi_k_oracle, psi_k_formula, FormulaComparison,
    PointInteractionModel,
};
use qgraph_core::scalar::carg;
use qgraph_core::symmetry::{check_z_invariance, solve_theta};
use qgraph_core::{Error, ThetaAssignment};

use crate::config::{kind_label, BlochChoice, RunConfig};
use crate::CliError;

const INVARIANCE_TOL: f64 = 1e-10;

/// Up to 12 significant digits, trailing zeros removed, `-0` printed as `0`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-5..12).contains(&exp) {
        let prec = (11 - exp).max(0) as usize;
        let s = format!("{x:.prec$}");
        if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s }
    } else {
        let s = format!("{x:.11e}");
        let (m, e) = s.split_once('e').expect("exponent form");
        let m = if m.contains('.') { m.trim_end_matches('0').trim_end_matches('.') } else { m };
        format!("{m}e{e}")
    };
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') { "0".into() } else { s }
}

/// Complex number with parts below `1e-12` dropped.
pub fn fmt_complex(z: Complex<f64>) -> String {
    let snap = |x: f64| if x.abs() < 1e-12 { 0.0 } else { x };
    let (re, im) = (snap(z.re), snap(z.im));
    match (re == 0.0, im == 0.0) {
        (_, true) => fmt_num(re),
        (true, false) => format!("{}i", fmt_num(im)),
        (false, false) => {
            let sign = if im < 0.0 { '-' } else { '+' };
            format!("{}{sign}{}i", fmt_num(re), fmt_num(im.abs()))
        }
    }
}

fn csv_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn sorted_block_eigenvalues(spec: &BlockSpectrum<f64>, vertex: i64) -> Vec<Complex<f64>> {
    let minus_one = Complex::new(-1.0, 0.0);
    let mut v: Vec<Complex<f64>> =
        spec.eigenvalues.iter().filter(|(id, _)| *id == vertex).map(|&(_, z)| z).collect();
    let key = |z: &Complex<f64>| ((z - minus_one).norm() < 1e-9, carg(*z));
    v.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite eigenvalues"));
    v
}

fn gap_text(spec: &BlockSpectrum<f64>) -> String {
    spec.gap_margin.map_or_else(|| "none".into(), fmt_num)
}

fn twist_label(theta: &ThetaAssignment<f64>) -> String {
    if theta.is_zero(1e-12) {
        "0".into()
    } else {
        "twisted".into()
    }
}

/// Block spectra, gap margin and the shift-invariance verdict.
pub fn cmd_validate(cfg: &RunConfig) -> Result<String, CliError> {
    let mut out = String::new();
    let opts = SpectralOptions::default();
    if let Some((g, blocks)) = cfg.general_graph()? {
        let spec = blockwise_spectrum(&blocks, &opts)?;
        writeln!(out, "graph: {} edges, {} vertices", g.edges().len(), g.vertices().len()).unwrap();
        for v in g.vertices() {
            let eigs: Vec<String> = sorted_block_eigenvalues(&spec, v.id).into_iter().map(fmt_complex).collect();
            writeln!(out, "vertex {}: degree {}, eigenvalues {}", v.id, v.degree(), eigs.join(", ")).unwrap();
        }
        writeln!(out, "gap margin {}", gap_text(&spec)).unwrap();
        writeln!(out, "Z-invariant: not applicable to a general graph").unwrap();
        return Ok(out);
    }
    let chain = cfg.chain()?;
    let spec = blockwise_spectrum(&chain.block_unitary(), &opts)?;
    writeln!(
        out,
        "chain cells {}, l_u {}, l_v {}",
        cfg.cells,
        fmt_num(chain.l_u),
        fmt_num(chain.l_v)
    )
    .unwrap();
    for i in chain.window.cells() {
        let p = chain.node_params(i);
        let a: Vec<String> = p.alphas().iter().map(|x| fmt_num(*x)).collect();
        let eigs: Vec<String> = sorted_block_eigenvalues(&spec, i).into_iter().map(fmt_complex).collect();
        writeln!(
            out,
            "vertex {i}: delta {}, alphas ({}), eigenvalues {}",
            fmt_num(p.delta()),
            a.join(", "),
            eigs.join(", ")
        )
        .unwrap();
    }
    let gap = gap_text(&spec);
    writeln!(out, "gap margin {gap}").unwrap();
    let cells = chain.cell_params();
    let (theta, label) = match cfg.theta() {
        Some(t) => (t, "given".to_string()),
        None => match solve_theta(&cells) {
            Ok(t) => {
                let label = twist_label(&t);
                (t, label)
            }
            Err(Error::Obstruction { vertex, reason }) => {
                writeln!(out, "obstruction: {reason}").unwrap();
                writeln!(out, "Z-invariant: no, obstruction at vertex {vertex}").unwrap();
                return Ok(out);
            }
            Err(e) => return Err(e.into()),
        },
    };
    let report = check_z_invariance(&cells, &theta, INVARIANCE_TOL)?;
    if !report.invariant {
        let (vertex, r) = report
            .per_vertex
            .iter()
            .copied()
            .find(|&(_, r)| r >= INVARIANCE_TOL)
            .expect("a failing vertex");
        writeln!(out, "obstruction: twisted block differs by {}", fmt_num(r)).unwrap();
        writeln!(out, "Z-invariant: no, obstruction at vertex {vertex}").unwrap();
        return Ok(out);
    }
    if label == "twisted" {
        for i in chain.window.cells() {
            writeln!(
                out,
                "theta cell {i}: u {}, v {}",
                fmt_num(theta.get(i, qgraph_core::ChainKind::U)),
                fmt_num(theta.get(i, qgraph_core::ChainKind::V))
            )
            .unwrap();
        }
    }
    writeln!(out, "Z-invariant: yes, theta={label}, gap margin {gap}").unwrap();
    Ok(out)
}

/// Block eigenvalues as CSV `vertex,re,im`.
pub fn cmd_block(cfg: &RunConfig) -> Result<String, CliError> {
    let blocks = match cfg.general_graph()? {
        Some((_, b)) => b,
        None => cfg.chain()?.block_unitary(),
    };
    let spec = blockwise_spectrum(&blocks, &SpectralOptions::default())?;
    let mut out = String::from("vertex,re,im\n");
    for &id in blocks.blocks().keys() {
        for z in sorted_block_eigenvalues(&spec, id) {
            writeln!(out, "{id},{},{}", csv_num(z.re), csv_num(z.im)).unwrap();
        }
    }
    Ok(out)
}

pub struct InvarianceRun {
    /// `cell,kind,theta`.
    pub csv: String,
    pub summary: String,
}

/// Solved (or given) twist phases and the invariance residual.
pub fn cmd_invariance(cfg: &RunConfig) -> Result<InvarianceRun, CliError> {
    let chain = cfg.chain()?;
    let cells = chain.cell_params();
    let theta = match cfg.theta() {
        Some(t) => t,
        None => solve_theta(&cells)?,
    };
    let report = check_z_invariance(&cells, &theta, INVARIANCE_TOL)?;
    let mut csv = String::from("cell,kind,theta\n");
    for i in chain.window.cells() {
        for kind in [qgraph_core::ChainKind::U, qgraph_core::ChainKind::V] {
            writeln!(csv, "{i},{},{}", kind_label(kind), csv_num(theta.get(i, kind))).unwrap();
        }
    }
    let summary = format!(
        "invariance residual {} ({})\n",
        fmt_num(report.residual),
        if report.invariant { "invariant" } else { "not invariant" }
    );
    Ok(InvarianceRun { csv, summary })
}

pub struct BandRun {
    pub csv: String,
    pub summary: String,
}

/// Transfer eigenvalues on a k grid.
pub fn cmd_band(cfg: &RunConfig) -> Result<BandRun, CliError> {
    let chain = cfg.chain()?;
    let samples = band_structure(
        &chain,
        cfg.k_min.unwrap_or(0.01),
        cfg.k_max.unwrap_or(TAU),
        cfg.samples.unwrap_or(2000),
    )?;
    let mut csv = String::from("k,lambda1_re,lambda1_im,lambda2_re,lambda2_im,in_band\n");
    for s in &samples {
        let [a, b] = s.eigenvalues;
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            csv_num(s.k),
            csv_num(a.re),
            csv_num(a.im),
            csv_num(b.re),
            csv_num(b.im),
            s.in_band
        )
        .unwrap();
    }
    let mut summary = String::new();
    for (a, b) in band_gaps(&samples) {
        writeln!(summary, "gap {} .. {}", fmt_num(a), fmt_num(b)).unwrap();
    }
    let det = samples.iter().map(|s| (s.det_abs - 1.0).abs()).fold(0.0, f64::max);
    writeln!(summary, "max ||det T| - 1| {}", fmt_num(det)).unwrap();
    Ok(BandRun { csv, summary })
}

pub struct EigenfunctionRun {
    pub k: f64,
    /// `cell,kind,x,re,im,abs`.
    pub csv: String,
    pub residual: f64,
    pub multiplier: Option<Complex<f64>>,
    pub continuity: f64,
    pub growth: Option<f64>,
}

/// One sampled candidate per configured k.
pub fn cmd_eigenfunction(cfg: &RunConfig) -> Result<Vec<EigenfunctionRun>, CliError> {
    let ks = cfg.k.as_ref().map(|k| k.values()).unwrap_or_default();
    if ks.is_empty() {
        return Err(CliError::Parse("eigenfunction needs k (config field or --k)".into()));
    }
    let chain = cfg.chain()?;
    let choice = cfg.bloch.unwrap_or(if chain.is_vertex_independent() {
        BlochChoice::Positive
    } else {
        BlochChoice::Off
    });
    let seed = cfg.seed.map_or_else(
        || EdgeCoefficients::new(Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)),
        |s| EdgeCoefficients::new(Complex::new(s.a[0], s.a[1]), Complex::new(s.b[0], s.b[1])),
    );
    let points = cfg.points_per_edge.unwrap_or(101);
    ks.into_iter()
        .map(|k| {
            let multiplier = match choice {
                BlochChoice::Off => None,
                BlochChoice::Positive | BlochChoice::Negative => {
                    let mut mus = bloch_multipliers(&chain, k)?;
                    mus.sort_by(|a, b| carg(*a).partial_cmp(&carg(*b)).expect("finite"));
                    let pick = if choice == BlochChoice::Positive { mus.last() } else { mus.first() };
                    Some(*pick.ok_or(Error::NotInBand { k })?)
                }
            };
            let cand = build_candidate(&chain, k, seed, multiplier)?;
            let rows = sample_eigenfunction(&cand, points)?;
            let mut csv = String::from("cell,kind,x,re,im,abs\n");
            for r in &rows {
                writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    r.cell,
                    kind_label(r.kind),
                    csv_num(r.x),
                    csv_num(r.value.re),
                    csv_num(r.value.im),
                    csv_num(r.value.norm())
                )
                .unwrap();
            }
            Ok(EigenfunctionRun {
                k,
                csv,
                residual: cand.residual,
                multiplier,
                continuity: modulus_continuity_defect(&rows),
                growth: cand.growth,
            })
        })
        .collect()
}

pub struct ClosedRun {
    /// `k,n,residual`.
    pub csv: String,
    pub spectrum: ClosedSpectrum<f64>,
    pub summary: String,
}

/// Roots of the closed chain of `m` cells.
pub fn cmd_closed(cfg: &RunConfig) -> Result<ClosedRun, CliError> {
    let m = cfg.m.ok_or_else(|| CliError::Parse("closed needs m (config field or --m)".into()))?;
    let chain = cfg.chain()?;
    let opts = ClosedChainOptions { samples: cfg.samples.unwrap_or(2000), ..Default::default() };
    let spectrum = closed_chain_spectrum(&chain, m, cfg.k_max.unwrap_or(TAU), &opts)?;
    let mut csv = String::from("k,n,residual\n");
    for r in &spectrum.roots {
        writeln!(csv, "{},{},{}", csv_num(r.k), r.n, csv_num(r.residual)).unwrap();
    }
    let uncertified = spectrum.roots.iter().filter(|r| !r.certified).count();
    let mut summary = format!(
        "{} roots for m = {}, grid {}, {} uncertified\n",
        spectrum.roots.len(),
        m,
        spectrum.samples,
        uncertified
    );
    if spectrum.crowded {
        summary.push_str("warning: roots still share a grid step after refinement\n");
    }
    Ok(ClosedRun { csv, spectrum, summary })
}

pub struct PointRun {
    /// `x,formula_re,formula_im,oracle_re,oracle_im`.
    pub csv: String,
    pub report: FormulaComparison<f64>,
    pub summary: String,
}

/// Closed formula and matched solution for the point interaction.
pub fn cmd_pointint(cfg: &RunConfig) -> Result<PointRun, CliError> {
    let ks = cfg.k.as_ref().map(|k| k.values()).unwrap_or_else(|| vec![1.0]);
    let [k] = ks[..] else {
        return Err(CliError::Parse("pointint takes a single k".into()));
    };
    let doc = cfg.point_interaction.unwrap_or(crate::config::PointInteractionDoc {
        alpha: 1.0,
        x_min: -5.0,
        x_max: 5.0,
    });
    if !(doc.x_max > doc.x_min) {
        return Err(CliError::Parse("point_interaction needs x_min < x_max".into()));
    }
    let model = PointInteractionModel::new(doc.alpha)?;
    let n = cfg.points_per_edge.unwrap_or(201);
    let xs: Vec<f64> =
        (0..n).map(|j| doc.x_min + (doc.x_max - doc.x_min) * j as f64 / (n - 1) as f64).collect();
    let mut csv = String::from("x,formula_re,formula_im,oracle_re,oracle_im\n");
    for &x in &xs {
        let (p, o) = (psi_k_formula(&model, k, x)?, psi_k_oracle(&model, k, x)?);
        writeln!(csv, "{},{},{},{},{}", csv_num(x), csv_num(p.re), csv_num(p.im), csv_num(o.re), csv_num(o.im))
            .unwrap();
    }
    let report = compare_formula_to_oracle(&model, k, &xs)?;
    let (oc, oj) = oracle_matching_defects(&model, k)?;
    let summary = format!(
        "formula: continuity defect {}, jump defect {}, max deviation {} at phase {}\n\
         matched solution: continuity defect {}, jump defect {}\n",
        fmt_num(report.continuity_defect),
        fmt_num(report.jump_defect),
        fmt_num(report.max_deviation),
        fmt_num(report.best_phase),
        fmt_num(oc),
        fmt_num(oj)
    );
    Ok(PointRun { csv, report, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(1.5e-9), "1.5e-9");
        assert_eq!(fmt_num(123456.789), "123456.789");
        assert_eq!(fmt_num(std::f64::consts::PI), "3.14159265359");
    }

    #[test]
    fn complex_formatting() {
        assert_eq!(fmt_complex(Complex::new(-1.0, 1e-17)), "-1");
        assert_eq!(fmt_complex(Complex::new(0.0, -0.5)), "-0.5i");
        assert_eq!(fmt_complex(Complex::new(0.5, -0.25)), "0.5-0.25i");
    }

    #[test]
    fn default_chain_verdict() {
        let report = cmd_validate(&RunConfig::default()).unwrap();
        assert!(report.ends_with("Z-invariant: yes, theta=0, gap margin 2\n"), "{report}");
        assert!(report.contains("vertex 0: delta 0, alphas (0, 0, 0), eigenvalues 1, -1, -1, -1"), "{report}");
    }
}
