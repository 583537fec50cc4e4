use super::Weighting;

/// Nearest neighbours in standardized feature space (Euclidean).
#[derive(Debug, Clone)]
pub struct KnnRegressor {
    rows: Vec<Vec<f64>>,
    y: Vec<f64>,
    neighbors: usize,
    weighting: Weighting,
}

impl KnnRegressor {
    pub(crate) fn fit(rows: &[Vec<f64>], y: &[f64], neighbors: usize, weighting: Weighting) -> Self {
        Self {
            rows: rows.to_vec(),
            y: y.to_vec(),
            neighbors,
            weighting,
        }
    }

    pub(crate) fn predict(&self, z: &[f64]) -> f64 {
        let mut dist: Vec<(f64, f64)> = self
            .rows
            .iter()
            .zip(&self.y)
            .map(|(r, &t)| {
                let d2: f64 = r.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2.sqrt(), t)
            })
            .collect();
        // equal distances fall back to the label, never to row order
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let near = &dist[..self.neighbors.min(dist.len())];
        let mean = |s: &[(f64, f64)]| s.iter().map(|p| p.1).sum::<f64>() / s.len() as f64;
        match self.weighting {
            Weighting::Uniform => mean(near),
            Weighting::InverseDistance => {
                let exact: Vec<(f64, f64)> = near.iter().copied().filter(|p| p.0 == 0.0).collect();
                if !exact.is_empty() {
                    return mean(&exact);
                }
                let (num, den) = near
                    .iter()
                    .fold((0.0, 0.0), |(n, d), &(dist, t)| (n + t / dist, d + 1.0 / dist));
                num / den
            }
        }
    }
}
