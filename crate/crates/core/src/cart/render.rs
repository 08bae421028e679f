use super::tree::RegressionTree;
use super::{Direction, FeatureKind, SplitCondition};
use std::fmt::Write;

fn describe(tree: &RegressionTree, feature: usize, cond: &SplitCondition, side: Direction) -> String {
    let def = &tree.features[feature];
    match cond {
        SplitCondition::Threshold { threshold, below } => {
            let op = if *below == side { "<" } else { ">=" };
            format!("{} {op} {}", def.name, fmt_num(*threshold))
        }
        SplitCondition::Categories { left, right } => {
            let codes = if side == Direction::Left { left } else { right };
            let names: Vec<String> = match &def.kind {
                FeatureKind::Categorical { levels } => codes.iter().map(|&c| levels[c].clone()).collect(),
                FeatureKind::Numeric => codes.iter().map(|c| c.to_string()).collect(),
            };
            format!("{} in {{{}}}", def.name, names.join(","))
        }
    }
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// Indented text rendering, one node per line, numbered root = 1 and
/// children `2k`, `2k+1`. Leaves are marked with `*`.
pub fn render_tree(tree: &RegressionTree, with_surrogates: bool) -> String {
    let mut out = String::new();
    writeln!(out, "node), split, n, sse, mean").unwrap();
    let mut stack = vec![(0usize, 1u64, String::from("root"))];
    while let Some((i, label, text)) = stack.pop() {
        let node = &tree.nodes[i];
        let pad = "  ".repeat(node.depth);
        let star = if node.is_leaf() { " *" } else { "" };
        writeln!(out, "{pad}{label}) {text} {} {:.2} {:.3}{star}", node.n, node.sse, node.mean).unwrap();
        if let (Some(rule), Some((l, r))) = (&node.split, node.children) {
            if with_surrogates && !rule.surrogates.is_empty() {
                let parts: Vec<String> = rule
                    .surrogates
                    .iter()
                    .map(|s| format!("{} ({:.3})", describe(tree, s.feature, &s.condition, Direction::Left), s.agreement))
                    .collect();
                writeln!(out, "{pad}   surrogates: {}", parts.join(", ")).unwrap();
            }
            stack.push((r, label.saturating_mul(2) + 1, describe(tree, rule.feature, &rule.condition, Direction::Right)));
            stack.push((l, label.saturating_mul(2), describe(tree, rule.feature, &rule.condition, Direction::Left)));
        }
    }
    out
}
