//! Degree-distribution pairs and the ensemble description.
//!
//! Distributions are edge-perspective: `λ(y) = Σ λ_d y^{d-1}` where `λ_d` is
//! the fraction of edges attached to a degree-`d` node. The text form follows
//! the polynomial notation, so `0.5 y + 0.5 y^4` has degrees 2 and 5.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gf2;

const SUM_TOLERANCE: f64 = 1e-12;

/// Sparse map from node degree to edge-perspective weight.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeDistribution {
    weights: BTreeMap<usize, f64>,
}

impl DegreeDistribution {
    /// Validates weights that already sum to one.
    pub fn new<I: IntoIterator<Item = (usize, f64)>>(pairs: I) -> Result<Self> {
        let mut weights = BTreeMap::new();
        for (d, w) in pairs {
            if d < 2 {
                return Err(Error::InvalidEnsemble(format!(
                    "degree {d} below 2 is not allowed"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidEnsemble(format!(
                    "weight {w} for degree {d} must be finite and nonnegative"
                )));
            }
            *weights.entry(d).or_insert(0.0) += w;
        }
        weights.retain(|_, w| *w > 0.0);
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidEnsemble(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Like [`DegreeDistribution::new`] but rescales the weights to sum to one.
    pub fn normalized<I: IntoIterator<Item = (usize, f64)>>(pairs: I) -> Result<Self> {
        let pairs: Vec<(usize, f64)> = pairs.into_iter().collect();
        let total: f64 = pairs.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidEnsemble("weights sum to zero".into()));
        }
        Self::new(pairs.into_iter().map(|(d, w)| (d, w / total)))
    }

    /// Single-degree distribution, e.g. `regular(3)` is `y^2`.
    pub fn regular(degree: usize) -> Result<Self> {
        Self::new([(degree, 1.0)])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().map(|(&d, &w)| (d, w))
    }

    pub fn weight(&self, degree: usize) -> f64 {
        self.weights.get(&degree).copied().unwrap_or(0.0)
    }

    pub fn min_degree(&self) -> usize {
        *self.weights.keys().next().expect("nonempty distribution")
    }

    pub fn max_degree(&self) -> usize {
        *self.weights.keys().next_back().expect("nonempty distribution")
    }

    /// `Σ w_d x^{d-1}`.
    pub fn eval(&self, x: f64) -> f64 {
        self.iter().map(|(d, w)| w * x.powi(d as i32 - 1)).sum()
    }

    /// `∫_0^1 = Σ w_d / d`.
    pub fn integral(&self) -> f64 {
        self.iter().map(|(d, w)| w / d as f64).sum()
    }

    /// Derivative at zero, the degree-2 weight.
    pub fn derivative_at_zero(&self) -> f64 {
        self.weight(2)
    }

    /// Derivative at one, `Σ w_d (d - 1)`.
    pub fn derivative_at_one(&self) -> f64 {
        self.iter().map(|(d, w)| w * (d as f64 - 1.0)).sum()
    }

    /// Fraction of nodes of each degree: `(w_d / d) / Σ (w_d' / d')`.
    pub fn node_perspective(&self) -> BTreeMap<usize, f64> {
        let total = self.integral();
        self.iter().map(|(d, w)| (d, w / d as f64 / total)).collect()
    }

    /// Inverse of [`DegreeDistribution::node_perspective`].
    pub fn from_node_perspective(nodes: &BTreeMap<usize, f64>) -> Result<Self> {
        Self::normalized(nodes.iter().map(|(&d, &l)| (d, d as f64 * l)))
    }
}

impl fmt::Display for DegreeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (d, w)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            let exp = d - 1;
            let mono = if exp == 1 {
                "y".to_string()
            } else {
                format!("y^{exp}")
            };
            if w == 1.0 {
                write!(f, "{mono}")?;
            } else {
                write!(f, "{w} {mono}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for DegreeDistribution {
    type Err = Error;

    /// Parses `c1 y^a + c2 y^b + ...`; coefficients default to 1, `y` alone
    /// means `y^1`, and `*` between coefficient and monomial is optional.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parse {
            line: 0,
            field: "polynomial".into(),
            msg,
        };
        if s.trim().is_empty() {
            return Err(bad("empty polynomial".into()));
        }
        let mut pairs = Vec::new();
        for term in s.split('+') {
            let term: String = term.chars().filter(|c| !c.is_whitespace()).collect();
            if term.is_empty() {
                return Err(bad(format!("empty term in `{s}`")));
            }
            let (coeff, mono) = match term.find('y') {
                Some(pos) => (&term[..pos], Some(&term[pos + 1..])),
                None => (term.as_str(), None),
            };
            let coeff = coeff.strip_suffix('*').unwrap_or(coeff);
            let c = if coeff.is_empty() {
                1.0
            } else {
                coeff
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad coefficient `{coeff}` in `{term}`")))?
            };
            let exp = match mono {
                None => 0,
                Some("") => 1,
                Some(rest) => {
                    let digits = rest
                        .strip_prefix('^')
                        .ok_or_else(|| bad(format!("expected `^` after `y` in `{term}`")))?;
                    digits
                        .parse::<usize>()
                        .map_err(|_| bad(format!("bad exponent `{digits}` in `{term}`")))?
                }
            };
            pairs.push((exp + 1, c));
        }
        Self::new(pairs).map_err(|e| match e {
            Error::InvalidEnsemble(msg) => bad(msg),
            other => other,
        })
    }
}

/// How edge labels are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelKind {
    /// Uniform over invertible `m × m` binary matrices.
    GeneralLinear,
    /// Uniform over nonzero elements of `GF(2^m)` defined by `poly`
    /// (bit mask, LSB is the constant term, leading term included).
    FiniteField { poly: u64 },
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelKind::GeneralLinear => write!(f, "GL"),
            LabelKind::FiniteField { poly } => write!(f, "GF:{poly:#x}"),
        }
    }
}

impl FromStr for LabelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |msg: String| Error::Parse {
            line: 0,
            field: "labels".into(),
            msg,
        };
        if s.eq_ignore_ascii_case("GL") {
            return Ok(LabelKind::GeneralLinear);
        }
        let Some(mask) = s.strip_prefix("GF:").or_else(|| s.strip_prefix("gf:")) else {
            return Err(bad(format!("expected `GL` or `GF:<polymask>`, got `{s}`")));
        };
        let poly = if let Some(hex) = mask.strip_prefix("0x").or_else(|| mask.strip_prefix("0X")) {
            u64::from_str_radix(hex, 16)
        } else if let Some(bin) = mask.strip_prefix("0b") {
            u64::from_str_radix(bin, 2)
        } else {
            mask.parse::<u64>()
        }
        .map_err(|_| bad(format!("bad polynomial mask `{mask}`")))?;
        Ok(LabelKind::FiniteField { poly })
    }
}

/// A validated ensemble: degree distributions, alphabet exponent and label set.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub lambda: DegreeDistribution,
    pub rho: DegreeDistribution,
    pub m: usize,
    pub labels: LabelKind,
}

impl EnsembleSpec {
    pub fn new(
        lambda: DegreeDistribution,
        rho: DegreeDistribution,
        m: usize,
        labels: LabelKind,
    ) -> Result<Self> {
        if m == 0 || m > gf2::MAX_DIM {
            return Err(Error::InvalidEnsemble(format!(
                "alphabet exponent m = {m} outside 1..=64"
            )));
        }
        if let LabelKind::FiniteField { poly } = labels {
            // Validates degree and irreducibility.
            gf2::field_multiplication_matrix(m, poly, 1)?;
        }
        Ok(Self {
            lambda,
            rho,
            m,
            labels,
        })
    }

    /// Ensemble with general-linear labels from polynomial strings.
    pub fn parse(lambda: &str, rho: &str, m: usize) -> Result<Self> {
        Self::new(lambda.parse()?, rho.parse()?, m, LabelKind::GeneralLinear)
    }

    /// `1 - ∫ρ / ∫λ`.
    pub fn design_rate(&self) -> f64 {
        1.0 - self.rho.integral() / self.lambda.integral()
    }

    pub fn lambda_prime_zero(&self) -> f64 {
        self.lambda.derivative_at_zero()
    }

    pub fn rho_prime_one(&self) -> f64 {
        self.rho.derivative_at_one()
    }

    /// Variable-node degree fractions.
    pub fn node_perspective(&self) -> BTreeMap<usize, f64> {
        self.lambda.node_perspective()
    }

    /// Parses the `key = value` configuration format with keys `lambda`,
    /// `rho`, `m` and optional `labels` (default `GL`). `#` starts a comment.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut lambda = None;
        let mut rho = None;
        let mut m = None;
        let mut labels = (0, LabelKind::GeneralLinear);
        let with_line = |line: usize, field: &str, e: Error| match e {
            Error::Parse { msg, .. } => Error::Parse {
                line,
                field: field.into(),
                msg,
            },
            other => Error::Parse {
                line,
                field: field.into(),
                msg: other.to_string(),
            },
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    field: content.into(),
                    msg: "expected `key = value`".into(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            match key {
                "lambda" => {
                    lambda = Some((
                        line,
                        value
                            .parse::<DegreeDistribution>()
                            .map_err(|e| with_line(line, key, e))?,
                    ))
                }
                "rho" => {
                    rho = Some((
                        line,
                        value
                            .parse::<DegreeDistribution>()
                            .map_err(|e| with_line(line, key, e))?,
                    ))
                }
                "m" => {
                    m = Some((
                        line,
                        value.parse::<usize>().map_err(|_| Error::Parse {
                            line,
                            field: key.into(),
                            msg: format!("expected a positive integer, got `{value}`"),
                        })?,
                    ))
                }
                "labels" => {
                    labels = (
                        line,
                        value
                            .parse::<LabelKind>()
                            .map_err(|e| with_line(line, key, e))?,
                    )
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        field: other.into(),
                        msg: "unknown key".into(),
                    })
                }
            }
        }
        let missing = |field: &str| Error::Parse {
            line: 0,
            field: field.into(),
            msg: "missing".into(),
        };
        let (_, lambda) = lambda.ok_or_else(|| missing("lambda"))?;
        let (_, rho) = rho.ok_or_else(|| missing("rho"))?;
        let (m_line, m) = m.ok_or_else(|| missing("m"))?;
        let (label_line, labels) = labels;
        Self::new(lambda, rho, m, labels).map_err(|e| {
            let (line, field) = match e {
                Error::InvalidEnsemble(_) => (m_line, "m"),
                _ => (label_line, "labels"),
            };
            with_line(line, field, e)
        })
    }
}

impl fmt::Display for EnsembleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lambda = {}; rho = {}; m = {}; labels = {}",
            self.lambda, self.rho, self.m, self.labels
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn parses_polynomials() {
        let l: DegreeDistribution = "0.5 y^1 + 0.5 y^4".parse().unwrap();
        assert_eq!(l.iter().collect::<Vec<_>>(), vec![(2, 0.5), (5, 0.5)]);
        let l: DegreeDistribution = "0.5y+0.5*y^4".parse().unwrap();
        assert_eq!(l.iter().collect::<Vec<_>>(), vec![(2, 0.5), (5, 0.5)]);
        let r: DegreeDistribution = "y^5".parse().unwrap();
        assert_eq!(r.iter().collect::<Vec<_>>(), vec![(6, 1.0)]);
        let y: DegreeDistribution = "y".parse().unwrap();
        assert_eq!(y.iter().collect::<Vec<_>>(), vec![(2, 1.0)]);
    }

    #[test]
    fn rejects_malformed_polynomials() {
        for bad in ["", "y^", "x^2", "0.5 y + 0.4 y^2", "1", "y^0", "-1 y + 2 y^2", "y^2 +"] {
            assert!(bad.parse::<DegreeDistribution>().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn design_rates_of_tabulated_ensembles() {
        let e = EnsembleSpec::parse("y", "y^2", 1).unwrap();
        assert!(close(e.design_rate(), 1.0 / 3.0, 1e-15));
        assert!(close(1.0 - e.design_rate(), 0.6667, 5e-5));

        let e = EnsembleSpec::parse("0.5 y + 0.5 y^4", "y^5", 1).unwrap();
        // 1 - (1/6) / (0.25 + 0.1)
        assert!(close(1.0 - e.design_rate(), 0.4762, 5e-5));

        let e = EnsembleSpec::parse("y^2", "y^3", 1).unwrap();
        assert!(close(e.design_rate(), 0.25, 1e-15));
    }

    #[test]
    fn derivatives() {
        let e = EnsembleSpec::parse("y", "y^2", 1).unwrap();
        assert_eq!(e.lambda_prime_zero(), 1.0);
        assert_eq!(e.rho_prime_one(), 2.0);
        let e = EnsembleSpec::parse("0.5 y + 0.5 y^4", "y^5", 1).unwrap();
        assert_eq!(e.lambda_prime_zero(), 0.5);
        assert_eq!(e.rho_prime_one(), 5.0);
        let e = EnsembleSpec::parse("y^2", "y^3", 1).unwrap();
        assert_eq!(e.lambda_prime_zero(), 0.0);
    }

    #[test]
    fn node_perspective_examples() {
        let e = EnsembleSpec::parse("y", "y^2", 1).unwrap();
        assert_eq!(e.node_perspective(), BTreeMap::from([(2, 1.0)]));
        let e = EnsembleSpec::parse("0.5 y + 0.5 y^4", "y^5", 1).unwrap();
        let l = e.node_perspective();
        assert!(close(l[&2], 5.0 / 7.0, 1e-15));
        assert!(close(l[&5], 2.0 / 7.0, 1e-15));
        let back = DegreeDistribution::from_node_perspective(&l).unwrap();
        for (d, w) in e.lambda.iter() {
            assert!(close(back.weight(d), w, 1e-15));
        }
    }

    #[test]
    fn config_format() {
        let text = "# (5-regular checks)\nlambda = 0.5 y^1 + 0.5 y^4\nrho = y^5\nm = 3\nlabels = GF:0xb\n";
        let e = EnsembleSpec::from_config_str(text).unwrap();
        assert_eq!(e.m, 3);
        assert_eq!(e.labels, LabelKind::FiniteField { poly: 0xb });
        assert_eq!(e.rho.iter().collect::<Vec<_>>(), vec![(6, 1.0)]);

        let e = EnsembleSpec::from_config_str("lambda = y\nrho = y^2\nm = 6\nlabels = GL").unwrap();
        assert_eq!(e.labels, LabelKind::GeneralLinear);
    }

    #[test]
    fn config_errors_carry_line_and_field() {
        let err = EnsembleSpec::from_config_str("lambda = y\nrho = y^^2\nm = 2").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, ref field, .. } if field == "rho"), "{err}");

        let err = EnsembleSpec::from_config_str("lambda = y\nrho = y^2\nm = two").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, ref field, .. } if field == "m"));

        let err = EnsembleSpec::from_config_str("lambda = y\nrho = y^2\nm = 2\nlabels = GF:0x5").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, ref field, .. } if field == "labels"));

        let err = EnsembleSpec::from_config_str("lambda = y\nm = 2").unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "rho"));

        let err = EnsembleSpec::from_config_str("lambda = y\nrho = y^2\nm = 2\ncolour = red").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }

    #[test]
    fn label_kind_parsing() {
        assert_eq!("GL".parse::<LabelKind>().unwrap(), LabelKind::GeneralLinear);
        assert_eq!(
            "GF:0x7".parse::<LabelKind>().unwrap(),
            LabelKind::FiniteField { poly: 7 }
        );
        assert_eq!(
            "GF:11".parse::<LabelKind>().unwrap(),
            LabelKind::FiniteField { poly: 11 }
        );
        assert!("GF:".parse::<LabelKind>().is_err());
        assert!("PGL".parse::<LabelKind>().is_err());
        // wrong degree for m
        assert!(EnsembleSpec::new(
            "y".parse().unwrap(),
            "y^2".parse().unwrap(),
            3,
            LabelKind::FiniteField { poly: 7 }
        )
        .is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn weights() -> impl Strategy<Value = Vec<(usize, f64)>> {
            proptest::collection::btree_map(2usize..12, 0.01f64..1.0, 1..4)
                .prop_map(|m| m.into_iter().collect())
        }

        proptest! {
            #[test]
            fn rate_invariant_under_rescaling(l in weights(), r in weights(), scale in 0.1f64..10.0) {
                let lam = DegreeDistribution::normalized(l.clone()).unwrap();
                let rho = DegreeDistribution::normalized(r.clone()).unwrap();
                let lam2 = DegreeDistribution::normalized(l.iter().map(|&(d, w)| (d, w * scale))).unwrap();
                let rho2 = DegreeDistribution::normalized(r.iter().map(|&(d, w)| (d, w / scale))).unwrap();
                let a = EnsembleSpec::new(lam, rho, 2, LabelKind::GeneralLinear).unwrap();
                let b = EnsembleSpec::new(lam2, rho2, 2, LabelKind::GeneralLinear).unwrap();
                prop_assert!((a.design_rate() - b.design_rate()).abs() < 1e-12);
            }

            #[test]
            fn node_perspective_round_trip(l in weights()) {
                let lam = DegreeDistribution::normalized(l).unwrap();
                let nodes = lam.node_perspective();
                prop_assert!((nodes.values().sum::<f64>() - 1.0).abs() < 1e-12);
                let back = DegreeDistribution::from_node_perspective(&nodes).unwrap();
                for (d, w) in lam.iter() {
                    prop_assert!((back.weight(d) - w).abs() < 1e-12);
                }
            }
        }
    }
}
