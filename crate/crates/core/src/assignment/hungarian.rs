//! Shortest augmenting path assignment (Kuhn–Munkres with potentials, in the
//! Jonker–Volgenant style), O(n²·m) for `n` destinations and `m ≥ n` rows.
//!
//! Rows may be virtual copies of source rows: `row_of[k]` names the source row
//! behind virtual row `k`, so duplicated rows are never materialised. After
//! the solve, a refinement pass walks the equality subgraph of the optimal
//! dual and picks, destination by destination, the smallest source row that
//! still admits an optimal completion. The result is the lexicographically
//! smallest optimal mapping.

use std::collections::VecDeque;

use super::CostMatrix;

pub(super) fn solve(d: &CostMatrix, row_of: &[usize]) -> Vec<usize> {
    let n = d.cols();
    let m = row_of.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(m >= n);
    debug_assert!(row_of.windows(2).all(|w| w[0] <= w[1]));

    let cost = |dest: usize, vrow: usize| d.get(row_of[vrow], dest);

    // 1-based e-maxx layout: workers are destinations, jobs are virtual rows
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut match_dest = vec![0usize; n];
    let mut match_row = vec![None; m];
    for j in 1..=m {
        if p[j] != 0 {
            match_dest[p[j] - 1] = j - 1;
            match_row[j - 1] = Some(p[j] - 1);
        }
    }

    let max_entry = d.entries().iter().cloned().fold(0.0f64, f64::max);
    let mut refiner = Refiner {
        d,
        row_of,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
        tol: 1e-11 * max_entry * (n as f64 + 1.0),
        match_dest,
        match_row,
    };
    refiner.refine();
    refiner.match_dest.iter().map(|&r| row_of[r]).collect()
}

struct Refiner<'a> {
    d: &'a CostMatrix,
    row_of: &'a [usize],
    u: Vec<f64>,
    v: Vec<f64>,
    tol: f64,
    match_dest: Vec<usize>,
    match_row: Vec<Option<usize>>,
}

impl Refiner<'_> {
    fn tight(&self, dest: usize, vrow: usize) -> bool {
        self.d.get(self.row_of[vrow], dest) - self.u[dest] - self.v[vrow] <= self.tol
    }

    /// Rows with a zero potential may stay unmatched in an optimal solution.
    fn zero(&self, vrow: usize) -> bool {
        self.v[vrow] >= -self.tol
    }

    fn refine(&mut self) {
        let n = self.match_dest.len();
        let m = self.row_of.len();
        for j in 0..n {
            let cur_src = self.row_of[self.match_dest[j]];
            // virtual rows are grouped by ascending source, so a linear scan
            // visits candidate sources in order
            for r in 0..m {
                if self.row_of[r] >= cur_src {
                    break;
                }
                if !self.tight(j, r) {
                    continue;
                }
                if matches!(self.match_row[r], Some(o) if o < j) {
                    continue;
                }
                if self.try_force(j, r) {
                    break;
                }
            }
        }
    }

    /// Reassigns destination `j` to virtual row `r` if an optimal completion
    /// exists that leaves destinations `< j` untouched.
    fn try_force(&mut self, j: usize, r: usize) -> bool {
        let saved_dest = self.match_dest.clone();
        let saved_row = self.match_row.clone();
        let cur = self.match_dest[j];
        self.match_row[cur] = None;
        let displaced = self.match_row[r];
        self.match_dest[j] = r;
        self.match_row[r] = Some(j);

        let mut ok = match displaced {
            Some(jp) => self.augment(jp, j),
            None => true,
        };
        if ok && self.match_row[cur].is_none() && !self.zero(cur) {
            ok = self.cover(cur, j);
        }
        if !ok {
            self.match_dest = saved_dest;
            self.match_row = saved_row;
        }
        ok
    }

    /// Finds a new row for the unmatched destination `start` along tight
    /// alternating paths through destinations `> locked`.
    fn augment(&mut self, start: usize, locked: usize) -> bool {
        let m = self.row_of.len();
        let mut visited = vec![false; m];
        let mut parent = vec![usize::MAX; m];
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for r in 0..m {
                if visited[r] || !self.tight(x, r) {
                    continue;
                }
                visited[r] = true;
                parent[r] = x;
                match self.match_row[r] {
                    None => {
                        let mut row = r;
                        loop {
                            let dest = parent[row];
                            let old = self.match_dest[dest];
                            self.match_dest[dest] = row;
                            self.match_row[row] = Some(dest);
                            if dest == start {
                                return true;
                            }
                            row = old;
                        }
                    }
                    Some(o) if o > locked => queue.push_back(o),
                    Some(_) => {}
                }
            }
        }
        false
    }

    /// Gets the free, non-zero-potential row `required` matched by shifting
    /// destinations `> locked` until a zero-potential row is released.
    fn cover(&mut self, required: usize, locked: usize) -> bool {
        let n = self.match_dest.len();
        let m = self.row_of.len();
        let mut visited = vec![false; n];
        let mut from_row = vec![usize::MAX; n];
        let mut row_parent = vec![usize::MAX; m];
        let mut queue = VecDeque::from([required]);
        while let Some(row) = queue.pop_front() {
            for x in (locked + 1)..n {
                if visited[x] || !self.tight(x, row) {
                    continue;
                }
                visited[x] = true;
                from_row[x] = row;
                let rx = self.match_dest[x];
                if self.zero(rx) {
                    self.match_row[rx] = None;
                    let mut dest = x;
                    loop {
                        let target = from_row[dest];
                        self.match_dest[dest] = target;
                        self.match_row[target] = Some(dest);
                        if target == required {
                            return true;
                        }
                        dest = row_parent[target];
                    }
                }
                row_parent[rx] = x;
                queue.push_back(rx);
            }
        }
        false
    }
}
