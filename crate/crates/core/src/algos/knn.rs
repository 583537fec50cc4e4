use super::Deadline;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: u32,
    pub similarity: f64,
}

/// Top-`n` cosine neighbors of every entity over binary vectors.
///
/// `vectors[a]` lists the coordinates set for entity `a`; `transposed[c]`
/// lists the entities having coordinate `c`. Only positive similarities are
/// kept, ordered by similarity descending then index ascending. The deadline
/// is checked every 64 entities; entities not reached keep empty lists and the
/// returned flag is set.
pub fn cosine_neighbors(
    vectors: &[Vec<u32>],
    transposed: &[Vec<u32>],
    n: usize,
    deadline: &Deadline,
) -> (Vec<Vec<Neighbor>>, bool) {
    let m = vectors.len();
    let degrees: Vec<f64> = vectors.iter().map(|v| v.len() as f64).collect();
    let mut overlap = vec![0u32; m];
    let mut touched: Vec<u32> = Vec::new();
    let mut out = vec![Vec::new(); m];

    for a in 0..m {
        if a % 64 == 0 && a > 0 && deadline.passed() {
            return (out, true);
        }
        for &c in &vectors[a] {
            for &b in &transposed[c as usize] {
                if b as usize == a {
                    continue;
                }
                if overlap[b as usize] == 0 {
                    touched.push(b);
                }
                overlap[b as usize] += 1;
            }
        }
        let mut list: Vec<Neighbor> = touched
            .iter()
            .map(|&b| Neighbor {
                index: b,
                similarity: overlap[b as usize] as f64 / (degrees[a] * degrees[b as usize]).sqrt(),
            })
            .collect();
        for &b in &touched {
            overlap[b as usize] = 0;
        }
        touched.clear();

        let order = |x: &Neighbor, y: &Neighbor| {
            y.similarity.total_cmp(&x.similarity).then(x.index.cmp(&y.index))
        };
        if list.len() > n {
            list.select_nth_unstable_by(n - 1, order);
            list.truncate(n);
        }
        list.sort_unstable_by(order);
        out[a] = list;
    }
    (out, false)
}
