//! Compensated accumulation for empirical averages.

/// Neumaier compensated sum over a vector-valued stream.
#[derive(Debug, Clone)]
pub(crate) struct VecAccumulator {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl VecAccumulator {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            comp: vec![0.0; dim],
        }
    }

    pub(crate) fn add_scaled(&mut self, values: &[f64], scale: f64) {
        debug_assert_eq!(values.len(), self.sum.len());
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(values) {
            neumaier_step(s, c, v * scale);
        }
    }

    pub(crate) fn finish(self) -> Vec<f64> {
        self.sum
            .into_iter()
            .zip(self.comp)
            .map(|(s, c)| s + c)
            .collect()
    }
}

#[inline]
fn neumaier_step(sum: &mut f64, comp: &mut f64, value: f64) {
    let t = *sum + value;
    if sum.abs() >= value.abs() {
        *comp += (*sum - t) + value;
    } else {
        *comp += (value - t) + *sum;
    }
    *sum = t;
}

pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        neumaier_step(&mut sum, &mut comp, v);
    }
    sum + comp
}
