use super::split::midpoint;
use super::{Dataset, Direction, FeatureKind, SplitCondition, Surrogate};

fn numeric_surrogate(pairs: &mut [(f64, Direction)], total_left: usize) -> Option<(SplitCondition, usize)> {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let mut best: Option<(SplitCondition, usize)> = None;
    let mut left_below = 0;
    for i in 0..n.saturating_sub(1) {
        if pairs[i].1 == Direction::Left {
            left_below += 1;
        }
        if pairs[i].0 >= pairs[i + 1].0 {
            continue;
        }
        let n_below = i + 1;
        // below -> left, at-or-above -> right
        let agree = left_below + (n - n_below) - (total_left - left_below);
        let t = midpoint(pairs[i].0, pairs[i + 1].0);
        for (below, count) in [(Direction::Left, agree), (Direction::Right, n - agree)] {
            if best.as_ref().is_none_or(|b| count > b.1) {
                best = Some((SplitCondition::Threshold { threshold: t, below }, count));
            }
        }
    }
    best
}

fn categorical_surrogate(pairs: &[(f64, Direction)], n_levels: usize, majority: Direction) -> (SplitCondition, usize) {
    let mut counts = vec![(0usize, 0usize); n_levels];
    for &(v, d) in pairs {
        let c = &mut counts[v as usize];
        match d {
            Direction::Left => c.0 += 1,
            Direction::Right => c.1 += 1,
        }
    }
    let (mut left, mut right, mut agree) = (Vec::new(), Vec::new(), 0);
    for (level, &(l, r)) in counts.iter().enumerate() {
        if l + r == 0 {
            continue;
        }
        let goes_left = l > r || (l == r && majority == Direction::Left);
        if goes_left {
            left.push(level);
        } else {
            right.push(level);
        }
        agree += l.max(r);
    }
    (SplitCondition::Categories { left, right }, agree)
}

/// Ranked surrogate splits for a primary split at a node.
///
/// Each other feature gets its best single split by agreement with the
/// primary direction, over rows observed on both. A surrogate is kept only
/// when it beats sending every such row in the primary's majority direction.
/// Ranked by agreement, then feature index.
pub fn compute_surrogates(
    data: &Dataset,
    rows: &[usize],
    primary_feature: usize,
    primary: &SplitCondition,
    majority: Direction,
    max_surrogates: usize,
) -> Vec<Surrogate> {
    if max_surrogates == 0 {
        return Vec::new();
    }
    let xp = &data.columns[primary_feature];
    let mut out = Vec::new();
    for (f, def) in data.features.iter().enumerate() {
        if f == primary_feature {
            continue;
        }
        let xf = &data.columns[f];
        let mut pairs: Vec<(f64, Direction)> = rows
            .iter()
            .filter(|&&i| !xf[i].is_nan())
            .filter_map(|&i| primary.route(xp[i]).map(|d| (xf[i], d)))
            .collect();
        let n = pairs.len();
        if n < 2 {
            continue;
        }
        let total_left = pairs.iter().filter(|p| p.1 == Direction::Left).count();
        let baseline = total_left.max(n - total_left);
        let found = match &def.kind {
            FeatureKind::Numeric => numeric_surrogate(&mut pairs, total_left),
            FeatureKind::Categorical { levels } => Some(categorical_surrogate(&pairs, levels.len(), majority)),
        };
        if let Some((condition, agree)) = found {
            if agree > baseline {
                out.push(Surrogate { feature: f, condition, agreement: agree as f64 / n as f64 });
            }
        }
    }
    out.sort_by(|a, b| b.agreement.total_cmp(&a.agreement).then(a.feature.cmp(&b.feature)));
    out.truncate(max_surrogates);
    out
}
