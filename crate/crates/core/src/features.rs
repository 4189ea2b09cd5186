/// State features for the linear parameterizations.
///
/// States are finite, so a map is stored as a dense `num_states × dimension`
/// table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dimension: usize,
    num_states: usize,
    table: Vec<f64>,
}

impl FeatureMap {
    /// Tabular features: `evaluate(s)` is the `s`-th unit vector.
    pub fn one_hot(num_states: usize) -> Self {
        let mut table = vec![0.0; num_states * num_states];
        for s in 0..num_states {
            table[s * num_states + s] = 1.0;
        }
        FeatureMap { dimension: num_states, num_states, table }
    }

    /// Arbitrary features, one row per state.
    ///
    /// # Panics
    /// If rows are empty, ragged, or contain non-finite values.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let dimension = rows.first().map_or(0, Vec::len);
        assert!(dimension > 0, "feature dimension must be positive");
        assert!(rows.iter().all(|r| r.len() == dimension), "ragged feature rows");
        assert!(rows.iter().flatten().all(|x| x.is_finite()), "non-finite feature");
        let num_states = rows.len();
        FeatureMap { dimension, num_states, table: rows.into_iter().flatten().collect() }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn evaluate(&self, s: usize) -> &[f64] {
        &self.table[s * self.dimension..(s + 1) * self.dimension]
    }

    /// Every feature multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        FeatureMap { table: self.table.iter().map(|x| x * c).collect(), ..self.clone() }
    }
}
