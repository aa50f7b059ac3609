use crate::error::{Error, Result};

/// One cross-sectional unit: aligned outcome and covariate series.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: String,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

impl Unit {
    pub fn new(id: impl Into<String>, y: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if y.len() != x.len() {
            return Err(Error::InvalidConfig(format!(
                "unit {id}: y has {} values but x has {}",
                y.len(),
                x.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::EmptyUnit(id));
        }
        if let Some(t) = y.iter().chain(&x).position(|v| !v.is_finite()) {
            let column = if t < y.len() { "y" } else { "x" };
            let row = if t < y.len() { t } else { t - y.len() };
            return Err(Error::NonFiniteValue {
                row,
                column: format!("{column} (unit {id})"),
            });
        }
        Ok(Unit { id, y, x })
    }

    /// Number of time observations `T_j`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Possibly unbalanced panel; units keep their insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelData {
    pub units: Vec<Unit>,
}

impl PanelData {
    pub fn new(units: Vec<Unit>) -> Self {
        PanelData { units }
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn unit(&self, id: &str) -> Option<&Unit> {
        self.units.iter().find(|u| u.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Unit> {
        self.units.iter()
    }

    /// Subtracts each unit's own mean of `y` (individual fixed effects).
    pub fn demean_units(&mut self) {
        for u in &mut self.units {
            let m = u.y.iter().sum::<f64>() / u.y.len() as f64;
            u.y.iter_mut().for_each(|v| *v -= m);
        }
    }
}

impl FromIterator<Unit> for PanelData {
    fn from_iter<I: IntoIterator<Item = Unit>>(iter: I) -> Self {
        PanelData {
            units: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_lengths_and_nan() {
        assert!(Unit::new("a", vec![1.0], vec![]).is_err());
        assert!(matches!(Unit::new("a", vec![], vec![]), Err(Error::EmptyUnit(_))));
        let err = Unit::new("a", vec![1.0, f64::NAN], vec![0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { row: 1, .. }));
        let err = Unit::new("a", vec![1.0, 2.0], vec![0.0, f64::INFINITY]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { row: 1, .. }));
    }

    #[test]
    fn demeaning() {
        let mut p = PanelData::new(vec![Unit::new("a", vec![1.0, 3.0], vec![0.0, 1.0]).unwrap()]);
        p.demean_units();
        assert_eq!(p.units[0].y, vec![-1.0, 1.0]);
    }
}
