use treewalk::reduce::{build_fr, optional_line, RangeForest, VertexType};

fn rows(path: &str) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(format!("{}/data/{path}", env!("CARGO_MANIFEST_DIR"))).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn forest() -> RangeForest {
    let r = rows("figure1_forest.csv");
    let parent: Vec<Option<usize>> = r.iter().map(|c| c[1].parse().ok()).collect();
    let beta: Vec<u64> = r.iter().map(|c| c[2].parse().unwrap()).collect();
    let label: Vec<u64> = r.iter().map(|c| c[0].parse().unwrap()).collect();
    RangeForest::from_parents(&parent, &beta, &label).unwrap()
}

#[test]
fn fr_of_figure_matches_golden_tree() {
    let f = forest();
    let fr = build_fr(&f);
    let expected = rows("figure1_fr.csv");
    assert_eq!(fr.len(), expected.len());
    for (&v, row) in fr.lex_order().iter().zip(&expected) {
        let label = f.label[fr.source[v]].to_string();
        let parent = fr.parent[v].map(|p| f.label[fr.source[p]].to_string()).unwrap_or_default();
        let kind = match fr.kind[v] {
            VertexType::One => "1",
            VertexType::Zero => "0",
        };
        assert_eq!([label, parent, kind.to_owned(), fr.ell[v].to_string()], row[..]);
    }
}

#[test]
fn figure_heights_are_preserved() {
    let f = forest();
    let fr = build_fr(&f);
    let h = fr.weighted_depths();
    let heights: Vec<u64> = fr.lex_order().iter().map(|&v| h[v]).collect();
    let direct: Vec<u64> = f.depth.iter().map(|&d| u64::from(d)).collect();
    assert_eq!(heights, direct);
}

#[test]
fn figure_root_line() {
    let f = forest();
    let ol = optional_line(&f, 0);
    let labels = |v: &[usize]| v.iter().map(|&i| f.label[i]).collect::<Vec<_>>();
    assert_eq!(labels(&ol.block), [1, 2, 11, 12, 13, 14]);
    assert_eq!(labels(&ol.line), [2, 12, 14]);
}
