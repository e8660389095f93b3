use num_traits::Zero;
use thiserror::Error;

use super::payment::PaymentFunction;
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemeError {
    #[error("claim position {0} is listed more than once")]
    Repeated(usize),
    #[error("claim position {0} is not listed")]
    Missing(usize),
    #[error("claim position {0} does not exist")]
    OutOfRange(usize),
    #[error("priority class {0} is empty")]
    EmptyClass(usize),
}

/// Proportional payments: every claim gets `l_e / L^+` of each unit of assets.
pub fn make_proportional(liabilities: &[Rational]) -> Vec<PaymentFunction> {
    let all: Vec<usize> = (0..liabilities.len()).collect();
    build_priority(liabilities, &[all])
}

/// Edge ranking: claims are paid in full one after another, in `order`
/// (positions into `liabilities`).
pub fn make_edge_ranking(
    liabilities: &[Rational],
    order: &[usize],
) -> Result<Vec<PaymentFunction>, SchemeError> {
    let classes: Vec<Vec<usize>> = order.iter().map(|&i| vec![i]).collect();
    make_priority_proportional(liabilities, &classes)
}

/// Priority-proportional payments: classes are served in order, each one
/// proportionally, and a class only starts once the previous one is paid.
pub fn make_priority_proportional(
    liabilities: &[Rational],
    classes: &[Vec<usize>],
) -> Result<Vec<PaymentFunction>, SchemeError> {
    let mut seen = vec![false; liabilities.len()];
    for (j, class) in classes.iter().enumerate() {
        if class.is_empty() {
            return Err(SchemeError::EmptyClass(j));
        }
        for &i in class {
            match seen.get_mut(i) {
                None => return Err(SchemeError::OutOfRange(i)),
                Some(true) => return Err(SchemeError::Repeated(i)),
                Some(slot) => *slot = true,
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(SchemeError::Missing(i));
    }
    Ok(build_priority(liabilities, classes))
}

fn build_priority(liabilities: &[Rational], classes: &[Vec<usize>]) -> Vec<PaymentFunction> {
    let total: Rational = liabilities.iter().sum();
    let mut out = vec![PaymentFunction::zero(); liabilities.len()];
    if total.is_zero() {
        return out;
    }
    let mut start = Rational::zero();
    for class in classes {
        let size: Rational = class.iter().map(|&i| &liabilities[i]).sum();
        let end = &start + &size;
        for &i in class {
            let mut points = vec![Rational::zero(), start.clone(), end.clone(), total.clone()];
            points.dedup();
            let slopes: Vec<Rational> = points
                .windows(2)
                .map(|w| {
                    if w[0] >= start && w[1] <= end && !size.is_zero() {
                        &liabilities[i] / &size
                    } else {
                        Rational::zero()
                    }
                })
                .collect();
            out[i] = merged(&points, &slopes);
        }
        start = end;
    }
    out
}

/// Drops interior borders where the slope does not change.
fn merged(points: &[Rational], slopes: &[Rational]) -> PaymentFunction {
    let mut b = vec![points[0].clone()];
    let mut m: Vec<Rational> = Vec::new();
    for (k, slope) in slopes.iter().enumerate() {
        if m.last() == Some(slope) {
            *b.last_mut().unwrap() = points[k + 1].clone();
        } else {
            m.push(slope.clone());
            b.push(points[k + 1].clone());
        }
    }
    PaymentFunction::from_segments(&b, &m).expect("generated segments are well formed")
}
