use crate::data::Covariates;

/// Split-relevant view of the training covariates.
#[derive(Clone, Debug)]
pub struct TreeDesign {
    pub columns: Vec<Vec<f64>>,
    /// `Some(L)` for categorical columns with `L` levels.
    pub levels: Vec<Option<usize>>,
    pub n: usize,
    /// Per column, the ascending distinct values and each row's index into them.
    uniques: Vec<Vec<f64>>,
    ranks: Vec<Vec<u32>>,
}

fn dense_ranks(col: &[f64]) -> (Vec<f64>, Vec<u32>) {
    let mut u = col.to_vec();
    u.sort_unstable_by(f64::total_cmp);
    u.dedup();
    let ranks = col
        .iter()
        .map(|v| u.binary_search_by(|p| p.total_cmp(v)).expect("value present") as u32)
        .collect();
    (u, ranks)
}

impl TreeDesign {
    pub fn new(x: &Covariates) -> Self {
        Self::build(
            x.columns.iter().map(|c| c.values.clone()).collect(),
            x.columns.iter().map(|c| c.kind.n_levels()).collect(),
        )
    }

    /// Continuous-only design from column vectors.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Self {
        let levels = vec![None; columns.len()];
        Self::build(columns, levels)
    }

    fn build(columns: Vec<Vec<f64>>, levels: Vec<Option<usize>>) -> Self {
        let n = columns.first().map_or(0, Vec::len);
        let (uniques, ranks) = columns.iter().map(|c| dense_ranks(c)).unzip();
        TreeDesign {
            columns,
            levels,
            n,
            uniques,
            ranks,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn is_categorical(&self, var: usize) -> bool {
        self.levels[var].is_some()
    }

    /// True when `var` takes at least two distinct values on `rows`.
    pub fn var_splittable(&self, var: usize, rows: &[u32]) -> bool {
        let col = &self.columns[var];
        match rows.split_first() {
            Some((&first, rest)) => {
                let x0 = col[first as usize];
                rest.iter().any(|&r| col[r as usize] != x0)
            }
            None => false,
        }
    }

    pub fn node_splittable(&self, rows: &[u32]) -> bool {
        (0..self.n_vars()).any(|v| self.var_splittable(v, rows))
    }

    /// Distinct values of a continuous `var` on `rows`, ascending.
    pub fn distinct_values(&self, var: usize, rows: &[u32]) -> Vec<f64> {
        let ranks = &self.ranks[var];
        let uniq = &self.uniques[var];
        if rows.len() * 8 < uniq.len() {
            let mut rs: Vec<u32> = rows.iter().map(|&r| ranks[r as usize]).collect();
            rs.sort_unstable();
            rs.dedup();
            return rs.into_iter().map(|k| uniq[k as usize]).collect();
        }
        let mut seen = vec![false; uniq.len()];
        for &r in rows {
            seen[ranks[r as usize] as usize] = true;
        }
        seen.iter()
            .zip(uniq)
            .filter_map(|(&s, &v)| s.then_some(v))
            .collect()
    }

    /// Observed level indices of a categorical `var` on `rows`, ascending.
    pub fn present_levels(&self, var: usize, rows: &[u32]) -> Vec<usize> {
        let l = self.levels[var].expect("categorical column");
        let mut seen = vec![false; l];
        for &r in rows {
            seen[self.columns[var][r as usize] as usize] = true;
        }
        (0..l).filter(|&k| seen[k]).collect()
    }

    /// Covariate values of one training row.
    pub fn row(&self, r: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[r]).collect()
    }
}

impl From<&Covariates> for TreeDesign {
    fn from(x: &Covariates) -> Self {
        TreeDesign::new(x)
    }
}
