//! Model specification and design/penalty assembly.
//!
//! Column layout: intercept first, then parametric terms in spec order, then
//! each smooth's constraint-transformed basis columns in spec order. Every
//! penalty is stored as a dense block over its term's column range; padded
//! p×p matrices are produced on demand.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{
    self, ConstraintTransform, CrBasis, KnotVector, PenaltyBlock, DEFAULT_SHRINKAGE_EPS,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fit::Family;
use crate::linalg;

fn default_k() -> usize {
    10
}

/// How a smooth's penalty nullspace is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SmoothMode {
    /// Wiggliness penalty only; nullspace left unpenalized.
    #[default]
    #[serde(rename = "plain")]
    Plain,
    /// Zero eigenvalues lifted to a small fraction of the largest.
    #[serde(rename = "shrinkage")]
    Shrinkage,
    /// Separate penalty (and smoothing parameter) on the nullspace.
    #[serde(rename = "double-penalty", alias = "double")]
    DoublePenalty,
}

impl SmoothMode {
    /// Whether every basis direction carries some penalty.
    pub fn fully_penalized(self) -> bool {
        !matches!(self, SmoothMode::Plain)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothSpec {
    pub covariate: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub mode: SmoothMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrinkage_eps: Option<f64>,
}

impl SmoothSpec {
    pub fn new(covariate: impl Into<String>, k: usize, mode: SmoothMode) -> Self {
        SmoothSpec {
            covariate: covariate.into(),
            k,
            mode,
            shrinkage_eps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub parametric_terms: Vec<String>,
    #[serde(default)]
    pub smooths: Vec<SmoothSpec>,
}

impl ModelSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Same spec with every smooth switched to `mode`.
    pub fn with_mode(&self, mode: SmoothMode) -> Self {
        let mut out = self.clone();
        for s in &mut out.smooths {
            s.mode = mode;
        }
        out
    }

    fn referenced_columns(&self) -> Vec<&str> {
        let mut v = vec![self.response.as_str()];
        v.extend(self.parametric_terms.iter().map(String::as_str));
        v.extend(self.smooths.iter().map(|s| s.covariate.as_str()));
        v
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if data.nrows() == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        for c in self.referenced_columns() {
            if !data.has_column(c) {
                return Err(Error::UnknownColumn(c.to_string()));
            }
        }
        for s in &self.smooths {
            if s.k < 3 {
                return Err(Error::Parameter(format!(
                    "smooth of `{}`: k = {} < 3",
                    s.covariate, s.k
                )));
            }
            if let Some(eps) = s.shrinkage_eps {
                if !(eps > 0.0) {
                    return Err(Error::Parameter(format!("shrinkage eps {eps} must be > 0")));
                }
            }
        }
        data.check_finite(&self.referenced_columns())?;
        self.family
            .validate_response(data.column(&self.response)?)
            .map_err(Error::Data)
    }
}

/// Data-dependent pieces of a smooth, enough to rebuild its columns on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothLayout {
    pub covariate: String,
    pub mode: SmoothMode,
    pub shrinkage_eps: f64,
    pub knots: KnotVector,
    /// Column sums of the unconstrained basis over the fitting data.
    pub column_sums: Vec<f64>,
}

/// Everything needed to map covariates to design rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub parametric_terms: Vec<String>,
    pub smooths: Vec<SmoothLayout>,
}

#[derive(Debug, Clone)]
pub struct SmoothTerm {
    pub layout: SmoothLayout,
    pub basis: CrBasis,
    pub constraint: ConstraintTransform,
}

impl SmoothTerm {
    fn from_layout(layout: SmoothLayout) -> Self {
        let basis = CrBasis::new(layout.knots.clone());
        let sums = DMatrix::from_row_slice(1, layout.column_sums.len(), &layout.column_sums);
        let constraint = basis::constraint(&sums);
        SmoothTerm {
            layout,
            basis,
            constraint,
        }
    }

    /// Constrained basis rows at `xs`.
    pub fn design(&self, xs: &[f64]) -> DMatrix<f64> {
        self.basis.design(xs) * &self.constraint.z
    }

    /// Penalty blocks for this smooth in constrained coordinates.
    fn penalties(&self) -> Result<Vec<PenaltyBlock>> {
        let s = self.basis.penalty().constrained(&self.constraint)?;
        Ok(match self.layout.mode {
            SmoothMode::Plain => vec![s],
            SmoothMode::Shrinkage => vec![basis::shrinkage_penalty(&s, self.layout.shrinkage_eps)?],
            SmoothMode::DoublePenalty => {
                let star = PenaltyBlock::from_matrix(basis::nullspace_penalty(&s))?;
                vec![s, star]
            }
        })
    }
}

#[derive(Debug, Clone)]
pub enum TermKind {
    Intercept,
    Parametric(String),
    Smooth(Box<SmoothTerm>),
    /// Columns supplied directly through [`DesignMatrices::from_blocks`].
    Block,
}

#[derive(Debug, Clone)]
pub struct Term {
    pub label: String,
    pub kind: TermKind,
    pub cols: Range<usize>,
    /// Indices into [`DesignMatrices::penalties`].
    pub penalties: Vec<usize>,
    /// Rank of the sum of this term's penalties.
    pub penalty_rank: usize,
    /// True when the ranges of this term's penalties are mutually orthogonal.
    orthogonal_penalties: bool,
}

impl Term {
    pub fn width(&self) -> usize {
        self.cols.len()
    }

    pub fn smooth(&self) -> Option<&SmoothTerm> {
        match &self.kind {
            TermKind::Smooth(s) => Some(s),
            _ => None,
        }
    }
}

/// One penalty, stored over its term's columns.
#[derive(Debug, Clone)]
pub struct Penalty {
    pub term: usize,
    pub cols: Range<usize>,
    pub block: DMatrix<f64>,
    pub rank: usize,
    /// Sum of logs of the non-zero eigenvalues of `block`.
    pub log_pdet: f64,
}

#[derive(Debug, Clone)]
pub struct DesignMatrices {
    pub x: DMatrix<f64>,
    pub penalties: Vec<Penalty>,
    pub terms: Vec<Term>,
    /// Total dimension of the penalty nullspace, M_p.
    pub nullspace_dim_total: usize,
    /// How to rebuild the columns from data; `None` for designs built from raw blocks.
    pub layout: Option<ModelLayout>,
}

impl DesignMatrices {
    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_penalties(&self) -> usize {
        self.penalties.len()
    }

    /// p×p zero-padded penalty `m`.
    pub fn penalty_matrix(&self, m: usize) -> DMatrix<f64> {
        let p = self.ncols();
        let pen = &self.penalties[m];
        let mut out = DMatrix::zeros(p, p);
        out.view_mut((pen.cols.start, pen.cols.start), (pen.cols.len(), pen.cols.len()))
            .copy_from(&pen.block);
        out
    }

    pub fn penalty_matrices(&self) -> Vec<DMatrix<f64>> {
        (0..self.num_penalties()).map(|m| self.penalty_matrix(m)).collect()
    }

    /// `Σ λ_m S_m`.
    pub fn assemble_penalty(&self, lambdas: &[f64]) -> Result<DMatrix<f64>> {
        check_lambdas(lambdas, self.num_penalties())?;
        let p = self.ncols();
        let mut out = DMatrix::zeros(p, p);
        for (pen, &lam) in self.penalties.iter().zip(lambdas) {
            let c = pen.cols.start;
            let w = pen.cols.len();
            let mut v = out.view_mut((c, c), (w, w));
            v += &pen.block * lam;
        }
        Ok(out)
    }

    /// log of the product of non-zero eigenvalues of `Σ λ_m S_m` (all λ > 0).
    ///
    /// Worked out term by term; within a term whose penalties have orthogonal
    /// ranges this is exact without any eigendecomposition.
    pub fn log_pdet_penalty(&self, lambdas: &[f64]) -> f64 {
        let mut total = 0.0;
        for term in &self.terms {
            if term.penalties.is_empty() {
                continue;
            }
            if term.orthogonal_penalties {
                for &m in &term.penalties {
                    let pen = &self.penalties[m];
                    total += pen.rank as f64 * lambdas[m].ln() + pen.log_pdet;
                }
            } else {
                let w = term.width();
                let mut block = DMatrix::zeros(w, w);
                for &m in &term.penalties {
                    block += &self.penalties[m].block * lambdas[m];
                }
                let (values, _) = linalg::sym_eigen(&block);
                total += values
                    .iter()
                    .take(term.penalty_rank)
                    .map(|v| v.ln())
                    .sum::<f64>();
            }
        }
        total
    }

    /// Design rows for new covariate values (all columns).
    pub fn prediction_matrix(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        match &self.layout {
            Some(l) => l.prediction_matrix(data),
            None => Err(Error::Parameter(
                "design was built from raw blocks and cannot predict from data".into(),
            )),
        }
    }

    /// Rows mapping coefficients to term `t` alone, evaluated at `xs`.
    pub fn term_prediction_matrix(&self, t: usize, xs: &[f64]) -> Result<DMatrix<f64>> {
        let term = &self.terms[t];
        let mut lp = DMatrix::zeros(xs.len(), self.ncols());
        match &term.kind {
            TermKind::Intercept => lp.column_mut(0).fill(1.0),
            TermKind::Parametric(_) => {
                lp.column_mut(term.cols.start)
                    .copy_from(&DVector::from_column_slice(xs));
            }
            TermKind::Smooth(s) => {
                lp.columns_mut(term.cols.start, term.width())
                    .copy_from(&s.design(xs));
            }
            TermKind::Block => {
                return Err(Error::Parameter(format!(
                    "term `{}` has no covariate to evaluate",
                    term.label
                )))
            }
        }
        Ok(lp)
    }

    /// Design from a raw matrix and penalized column blocks, each with one
    /// or more penalties over its columns. Every column outside the blocks
    /// becomes its own unpenalized term.
    pub fn from_blocks(x: DMatrix<f64>, blocks: Vec<(Range<usize>, Vec<DMatrix<f64>>)>) -> Result<Self> {
        let p = x.ncols();
        let mut covered = vec![false; p];
        for (cols, pens) in &blocks {
            if cols.is_empty() || cols.end > p {
                return Err(Error::Parameter(format!("block {cols:?} is outside 0..{p}")));
            }
            for c in cols.clone() {
                if std::mem::replace(&mut covered[c], true) {
                    return Err(Error::Parameter(format!("column {c} is in two blocks")));
                }
            }
            for s in pens {
                if s.shape() != (cols.len(), cols.len()) {
                    return Err(Error::Parameter(format!(
                        "penalty for block {cols:?} must be {0}x{0}",
                        cols.len()
                    )));
                }
                linalg::ensure_symmetric(s)?;
            }
        }
        let mut parts: Vec<(Range<usize>, Vec<DMatrix<f64>>)> = blocks;
        parts.extend((0..p).filter(|&c| !covered[c]).map(|c| (c..c + 1, Vec::new())));
        parts.sort_by_key(|(cols, _)| cols.start);

        let mut terms = Vec::new();
        let mut penalties = Vec::new();
        for (t, (cols, pens)) in parts.into_iter().enumerate() {
            let pbs: Vec<PenaltyBlock> = pens
                .into_iter()
                .map(PenaltyBlock::from_matrix)
                .collect::<Result<_>>()?;
            let (term, pen) = make_term(format!("block{t}"), TermKind::Block, cols, t, &pbs, penalties.len());
            penalties.extend(pen);
            terms.push(term);
        }
        let nullspace_dim_total = terms.iter().map(|t| t.width() - t.penalty_rank).sum();
        Ok(DesignMatrices {
            x,
            penalties,
            terms,
            nullspace_dim_total,
            layout: None,
        })
    }

    pub fn term_index(&self, label: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.label == label)
    }
}

fn check_lambdas(lambdas: &[f64], m: usize) -> Result<()> {
    if lambdas.len() != m {
        return Err(Error::Parameter(format!(
            "expected {m} smoothing parameters, got {}",
            lambdas.len()
        )));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::Parameter(format!(
            "smoothing parameters must be finite and non-negative, got {l}"
        )));
    }
    Ok(())
}

/// `Σ λ_m S_m` over padded p×p penalty matrices.
pub fn assemble_penalty(lambdas: &[f64], penalties: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    check_lambdas(lambdas, penalties.len())?;
    let Some(first) = penalties.first() else {
        return Err(Error::Parameter("no penalties to assemble".into()));
    };
    let mut out = DMatrix::zeros(first.nrows(), first.ncols());
    for (s, &lam) in penalties.iter().zip(lambdas) {
        if s.shape() != first.shape() {
            return Err(Error::Parameter("penalty matrices differ in shape".into()));
        }
        out += s * lam;
    }
    Ok(out)
}

impl ModelLayout {
    /// Computes knots and constraint sums from the fitting data.
    pub fn from_data(data: &Dataset, spec: &ModelSpec) -> Result<Self> {
        spec.validate(data)?;
        let mut smooths = Vec::with_capacity(spec.smooths.len());
        for s in &spec.smooths {
            let x = data.column(&s.covariate)?;
            let knots = basis::place_knots(x, s.k).map_err(|e| match e {
                Error::DegenerateCovariate {
                    distinct, needed, ..
                } => Error::DegenerateCovariate {
                    name: s.covariate.clone(),
                    distinct,
                    needed,
                },
                other => other,
            })?;
            let raw = CrBasis::new(knots.clone()).design(x);
            let column_sums = raw.column_iter().map(|c| c.sum()).collect();
            smooths.push(SmoothLayout {
                covariate: s.covariate.clone(),
                mode: s.mode,
                shrinkage_eps: s.shrinkage_eps.unwrap_or(DEFAULT_SHRINKAGE_EPS),
                knots,
                column_sums,
            });
        }
        Ok(ModelLayout {
            parametric_terms: spec.parametric_terms.clone(),
            smooths,
        })
    }

    pub fn ncols(&self) -> usize {
        1 + self.parametric_terms.len()
            + self
                .smooths
                .iter()
                .map(|s| SmoothTerm::from_layout(s.clone()).constraint.width())
                .sum::<usize>()
    }

    /// Full design rows for `data` (intercept, parametric, smooths).
    pub fn prediction_matrix(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let n = data.nrows();
        let mut blocks: Vec<DMatrix<f64>> = vec![DMatrix::from_element(n, 1, 1.0)];
        for name in &self.parametric_terms {
            blocks.push(DMatrix::from_column_slice(n, 1, data.column(name)?));
        }
        for s in &self.smooths {
            let term = SmoothTerm::from_layout(s.clone());
            blocks.push(term.design(data.column(&s.covariate)?));
        }
        Ok(hstack(n, &blocks))
    }

    /// Builds the design and penalties for `data` using this layout.
    pub fn design(&self, data: &Dataset) -> Result<DesignMatrices> {
        let n = data.nrows();
        let mut blocks: Vec<DMatrix<f64>> = vec![DMatrix::from_element(n, 1, 1.0)];
        let mut terms = vec![Term {
            label: "(Intercept)".into(),
            kind: TermKind::Intercept,
            cols: 0..1,
            penalties: vec![],
            penalty_rank: 0,
            orthogonal_penalties: true,
        }];
        let mut col = 1;
        for name in &self.parametric_terms {
            blocks.push(DMatrix::from_column_slice(n, 1, data.column(name)?));
            terms.push(Term {
                label: name.clone(),
                kind: TermKind::Parametric(name.clone()),
                cols: col..col + 1,
                penalties: vec![],
                penalty_rank: 0,
                orthogonal_penalties: true,
            });
            col += 1;
        }
        let mut penalties = Vec::new();
        for s in &self.smooths {
            let term = SmoothTerm::from_layout(s.clone());
            let block = term.design(data.column(&s.covariate)?);
            let w = block.ncols();
            let cols = col..col + w;
            let t = terms.len();
            let blocks_for_term = if w == 0 { vec![] } else { term.penalties()? };
            let (t_entry, pens) = make_term(
                format!("s({})", s.covariate),
                TermKind::Smooth(Box::new(term)),
                cols,
                t,
                &blocks_for_term,
                penalties.len(),
            );
            penalties.extend(pens);
            terms.push(t_entry);
            blocks.push(block);
            col += w;
        }
        let x = hstack(n, &blocks);
        let nullspace_dim_total = terms.iter().map(|t| t.width() - t.penalty_rank).sum();
        Ok(DesignMatrices {
            x,
            penalties,
            terms,
            nullspace_dim_total,
            layout: Some(self.clone()),
        })
    }
}

/// A term over `cols` with its penalties, numbered from `first_penalty`.
fn make_term(
    label: String,
    kind: TermKind,
    cols: Range<usize>,
    t: usize,
    blocks: &[PenaltyBlock],
    first_penalty: usize,
) -> (Term, Vec<Penalty>) {
    let w = cols.len();
    let mut sum = DMatrix::zeros(w, w);
    let mut out = Vec::new();
    for pb in blocks {
        let (values, _) = linalg::sym_eigen(&pb.s);
        let log_pdet = values.iter().take(pb.rank).map(|v| v.ln()).sum();
        sum += &pb.s;
        out.push(Penalty {
            term: t,
            cols: cols.clone(),
            block: pb.s.clone(),
            rank: pb.rank,
            log_pdet,
        });
    }
    let orthogonal = blocks.iter().enumerate().all(|(a, pa)| {
        blocks[a + 1..]
            .iter()
            .all(|pb| (&pa.s * &pb.s).amax() <= 1e-10 * pa.s.amax() * pb.s.amax())
    });
    let term = Term {
        label,
        kind,
        cols,
        penalties: (first_penalty..first_penalty + out.len()).collect(),
        penalty_rank: if blocks.is_empty() { 0 } else { linalg::sym_rank(&sum) },
        orthogonal_penalties: orthogonal,
    };
    (term, out)
}

fn hstack(n: usize, blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let p = blocks.iter().map(DMatrix::ncols).sum();
    let mut x = DMatrix::zeros(n, p);
    let mut c = 0;
    for b in blocks {
        x.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    x
}

/// Global design matrix, padded penalties and term map for `spec` on `data`.
pub fn build_design(data: &Dataset, spec: &ModelSpec) -> Result<DesignMatrices> {
    ModelLayout::from_data(data, spec)?.design(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.618).fract()).collect();
        let z: Vec<f64> = (0..n).map(|i| (i as f64 * 0.382 + 0.1).fract()).collect();
        let y: Vec<f64> = x.iter().map(|v| (6.0 * v).sin()).collect();
        Dataset::from_columns([("x", x), ("z", z), ("y", y)]).unwrap()
    }

    #[test]
    fn intercept_only() {
        let spec = ModelSpec::from_json(r#"{"response": "y"}"#).unwrap();
        let d = build_design(&toy(20), &spec).unwrap();
        assert_eq!(d.x.shape(), (20, 1));
        assert!(d.x.iter().all(|&v| v == 1.0));
        assert!(d.penalties.is_empty());
        assert_eq!(d.nullspace_dim_total, 1);
    }

    #[test]
    fn plain_smooth_shapes() {
        let spec = ModelSpec::from_json(
            r#"{"response": "y", "family": "gaussian", "smooths": [{"covariate": "x", "k": 10}]}"#,
        )
        .unwrap();
        let d = build_design(&toy(100), &spec).unwrap();
        assert_eq!(d.ncols(), 10);
        assert_eq!(d.penalties.len(), 1);
        assert_eq!(linalg::sym_rank(&d.penalty_matrix(0)), 8);
        assert_eq!(d.nullspace_dim_total, 2);
        for c in 1..10 {
            assert!(d.x.column(c).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn double_penalty_block_full_rank() {
        let spec = ModelSpec {
            response: "y".into(),
            family: Family::Gaussian,
            parametric_terms: vec![],
            smooths: vec![SmoothSpec::new("x", 8, SmoothMode::DoublePenalty)],
        };
        let d = build_design(&toy(80), &spec).unwrap();
        assert_eq!(d.penalties.len(), 2);
        let sum = d.assemble_penalty(&[1.0, 1.0]).unwrap();
        let block = sum.view((1, 1), (7, 7)).into_owned();
        assert_eq!(linalg::sym_rank(&block), 7);
        assert_eq!(d.nullspace_dim_total, 1);
    }

    #[test]
    fn assemble_zero_and_scaled() {
        let spec = ModelSpec {
            response: "y".into(),
            family: Family::Gaussian,
            parametric_terms: vec![],
            smooths: vec![
                SmoothSpec::new("x", 5, SmoothMode::Plain),
                SmoothSpec::new("z", 6, SmoothMode::Plain),
            ],
        };
        let d = build_design(&toy(60), &spec).unwrap();
        let mats = d.penalty_matrices();
        let zero = assemble_penalty(&[0.0, 0.0], &mats).unwrap();
        assert_eq!(zero.amax(), 0.0);
        let two = assemble_penalty(&[2.0, 0.0], &mats).unwrap();
        assert_eq!(two, &mats[0] * 2.0);
        let both = assemble_penalty(&[1.0, 3.0], &mats).unwrap();
        // Off-block entries are exactly zero.
        for i in 1..5 {
            for j in 5..10 {
                assert_eq!(both[(i, j)], 0.0);
                assert_eq!(both[(j, i)], 0.0);
            }
        }
        assert_eq!(both, d.assemble_penalty(&[1.0, 3.0]).unwrap());
        assert!(assemble_penalty(&[-1.0, 0.0], &mats).is_err());
    }

    #[test]
    fn errors_on_bad_spec() {
        let data = toy(30);
        let spec = ModelSpec::from_json(r#"{"response": "nope"}"#).unwrap();
        assert!(matches!(build_design(&data, &spec), Err(Error::UnknownColumn(_))));
        let few = Dataset::from_columns([
            ("x", vec![0.0, 1.0, 0.0, 1.0, 2.0]),
            ("y", vec![1.0; 5]),
        ])
        .unwrap();
        let spec = ModelSpec::from_json(r#"{"response": "y", "smooths": [{"covariate": "x", "k": 4}]}"#)
            .unwrap();
        assert!(matches!(
            build_design(&few, &spec),
            Err(Error::DegenerateCovariate { .. })
        ));
        let bad = Dataset::from_columns([("x", vec![0.0, f64::NAN]), ("y", vec![1.0, 2.0])]).unwrap();
        let spec = ModelSpec::from_json(r#"{"response": "y", "parametric_terms": ["x"]}"#).unwrap();
        assert!(matches!(build_design(&bad, &spec), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn log_pdet_matches_eigen_route() {
        let spec = ModelSpec {
            response: "y".into(),
            family: Family::Gaussian,
            parametric_terms: vec![],
            smooths: vec![
                SmoothSpec::new("x", 7, SmoothMode::DoublePenalty),
                SmoothSpec::new("z", 5, SmoothMode::Shrinkage),
            ],
        };
        let d = build_design(&toy(60), &spec).unwrap();
        let lambdas = [0.3, 20.0, 1e-2];
        let s = d.assemble_penalty(&lambdas).unwrap();
        let (values, _) = linalg::sym_eigen(&s);
        let rank = d.ncols() - d.nullspace_dim_total;
        let direct: f64 = values.iter().take(rank).map(|v| v.ln()).sum();
        assert!((direct - d.log_pdet_penalty(&lambdas)).abs() < 1e-8);
    }
}
