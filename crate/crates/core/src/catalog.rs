//! Text specs for the builtin observation operators and densities.
//!
//! Operators:
//! - `ellipse[:a,b]`: `x1^2/a^2 + x2^2/b^2` (default `a = 1`, `b = 0.5`)
//! - `coordK[:d]`: the `K`-th coordinate (1-based) on `R^d` (default `d = 2`)
//! - `linear:a1,...,ad`: `a . x`
//! - `sphere[:offset[,d]]`: `|x|^2 - offset` on `R^d` (defaults `0`, `2`)
//!
//! Densities (dimension taken from the operator unless given):
//! - `gauss[:d]`: standard Gaussian
//! - `diag:v1,...,vd[@m1,...,md]`: independent Gaussian with variances `v` and means `m`
//! - `mixture:w;m1,..,md;v1,..,vd|w;...`: mixture of diagonal Gaussians

use crate::density::AmbientDensity;
use crate::error::{Error, Result};
use crate::geometry::ObservationOperator;

fn numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidInput(format!("not a finite number: {t:?}")))
        })
        .collect()
}

fn dimension(s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .ok()
        .filter(|d| *d >= 2)
        .ok_or_else(|| Error::InvalidInput(format!("dimension must be an integer >= 2, got {s:?}")))
}

/// Parses an operator spec such as `ellipse:1,0.5`.
pub fn parse_operator(spec: &str) -> Result<ObservationOperator> {
    let (name, args) = match spec.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a)),
        None => (spec.trim(), None),
    };
    match name {
        "ellipse" => match args {
            None => ObservationOperator::ellipse(1.0, 0.5),
            Some(a) => match numbers(a)?.as_slice() {
                [a, b] => ObservationOperator::ellipse(*a, *b),
                _ => Err(Error::InvalidInput("ellipse takes two scales: ellipse:a,b".into())),
            },
        },
        "linear" => {
            let coeffs = numbers(args.ok_or_else(|| Error::InvalidInput("linear needs coefficients".into()))?)?;
            ObservationOperator::linear(&coeffs)
        }
        "sphere" => {
            let vals = args.map(numbers).transpose()?.unwrap_or_default();
            match vals.as_slice() {
                [] => ObservationOperator::sphere(0.0, 2),
                [offset] => ObservationOperator::sphere(*offset, 2),
                [offset, d] if d.fract() == 0.0 && *d >= 2.0 => ObservationOperator::sphere(*offset, *d as usize),
                _ => Err(Error::InvalidInput("sphere takes sphere:offset[,d]".into())),
            }
        }
        other => match other.strip_prefix("coord").map(str::parse::<usize>) {
            Some(Ok(k)) if k >= 1 => {
                let d = args.map(dimension).transpose()?.unwrap_or(2);
                if k > d {
                    return Err(Error::InvalidInput(format!("coordinate {k} exceeds dimension {d}")));
                }
                ObservationOperator::coordinate(d, k - 1)
            }
            _ => Err(Error::InvalidInput(format!("unknown operator {spec:?}"))),
        },
    }
}

/// Parses a density spec on `R^dim`.
pub fn parse_density(spec: &str, dim: usize) -> Result<AmbientDensity> {
    let (name, args) = match spec.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a)),
        None => (spec.trim(), None),
    };
    let check_dim = |d: usize| {
        if d == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: dim, got: d })
        }
    };
    match name {
        "gauss" => {
            if let Some(a) = args {
                check_dim(dimension(a)?)?;
            }
            Ok(AmbientDensity::standard_gaussian(dim))
        }
        "diag" => {
            let a = args.ok_or_else(|| Error::InvalidInput("diag needs variances".into()))?;
            let (var, mean) = match a.split_once('@') {
                Some((v, m)) => (numbers(v)?, numbers(m)?),
                None => {
                    let v = numbers(a)?;
                    let m = vec![0.0; v.len()];
                    (v, m)
                }
            };
            check_dim(var.len())?;
            AmbientDensity::diagonal_gaussian(&mean, &var)
        }
        "mixture" => {
            let a = args.ok_or_else(|| Error::InvalidInput("mixture needs components".into()))?;
            let components = a
                .split('|')
                .map(|c| {
                    let parts: Vec<&str> = c.split(';').collect();
                    let [w, m, v] = parts.as_slice() else {
                        return Err(Error::InvalidInput(format!("mixture component {c:?} is not w;means;vars")));
                    };
                    let w = numbers(w)?;
                    let (m, v) = (numbers(m)?, numbers(v)?);
                    check_dim(m.len())?;
                    check_dim(v.len())?;
                    match w.as_slice() {
                        [w] => Ok((*w, m, v)),
                        _ => Err(Error::InvalidInput("mixture weight must be one number".into())),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            AmbientDensity::gaussian_mixture(&components)
        }
        _ => Err(Error::InvalidInput(format!("unknown density {spec:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn operators_parse() {
        let x = DVector::from_vec(vec![0.5, 1.0]);
        assert_eq!(parse_operator("ellipse:1,0.5").unwrap().eval(&x).unwrap()[0], 4.25);
        assert_eq!(parse_operator("ellipse").unwrap().eval(&x).unwrap()[0], 4.25);
        assert_eq!(parse_operator("coord1").unwrap().eval(&x).unwrap()[0], 0.5);
        assert_eq!(parse_operator("coord2:3").unwrap().dim_ambient(), 3);
        assert_eq!(parse_operator("linear:3,4").unwrap().eval(&x).unwrap()[0], 5.5);
        assert_eq!(parse_operator("sphere:1").unwrap().eval(&x).unwrap()[0], 0.25);
        assert_eq!(parse_operator("sphere:0,3").unwrap().dim_ambient(), 3);
        for bad in ["", "ellipse:1", "coord0", "coord3", "linear", "sphere:1,2.5", "torus"] {
            assert!(parse_operator(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn densities_parse() {
        let x = DVector::from_vec(vec![0.0, 0.0]);
        let g = parse_density("gauss", 2).unwrap();
        assert!((g.log_density(&x) + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        let d = parse_density("diag:1,1@0,0", 2).unwrap();
        assert!((d.log_density(&x) - g.log_density(&x)).abs() < 1e-15);
        let m = parse_density("mixture:0.5;0,0;1,1|0.5;0,0;1,1", 2).unwrap();
        assert!((m.log_density(&x) - g.log_density(&x)).abs() < 1e-14);
        assert!(parse_density("gauss:3", 2).is_err());
        assert!(parse_density("diag:1,1,1", 2).is_err());
        assert!(parse_density("mixture:0.5;0,0", 2).is_err());
        assert!(parse_density("cauchy", 2).is_err());
    }
}
