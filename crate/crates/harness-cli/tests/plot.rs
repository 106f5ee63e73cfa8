use harness_cli::artifacts::DiagramRow;
use harness_cli::plot::{bifurcation_svg, learning_curve_svg, staircase};

fn parse(svg: &str) -> roxmltree::Document<'_> {
    roxmltree::Document::parse(svg).expect("well-formed SVG")
}

fn count(doc: &roxmltree::Document<'_>, tag: &str, class: &str) -> usize {
    doc.descendants().filter(|n| n.has_tag_name(tag) && n.attribute("class") == Some(class)).count()
}

#[test]
fn empty_metrics_give_axes_only() {
    let svg = learning_curve_svg(&[]);
    let doc = parse(&svg);
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert_eq!(count(&doc, "line", "axis"), 2);
    assert_eq!(count(&doc, "polyline", "series"), 0);
}

#[test]
fn one_polyline_and_legend_entry_per_method() {
    let series = vec![("path_following".to_string(), vec![5.0, 4.0, 3.0]), ("softmax".to_string(), vec![6.0, 6.0, 5.5])];
    let svg = learning_curve_svg(&series);
    let doc = parse(&svg);
    assert_eq!(count(&doc, "polyline", "series"), 2);
    let legend: Vec<&str> =
        doc.descendants().filter(|n| n.attribute("class") == Some("legend")).filter_map(|n| n.text()).collect();
    assert_eq!(legend, vec!["path_following", "softmax"]);
}

#[test]
fn staircase_jumps_once_per_change() {
    let pts = [(0.1, 1), (0.5, 1), (1.0, 2), (2.0, 2), (3.0, 4), (4.0, 4)];
    let stairs = staircase(&pts);
    let vertical = stairs.windows(2).filter(|w| w[0].0 == w[1].0 && w[0].1 != w[1].1).count();
    assert_eq!(vertical, 2);
    assert!(stairs.windows(2).all(|w| w[0].0 == w[1].0 || w[0].1 == w[1].1));
}

#[test]
fn diagram_svg_draws_one_staircase_per_branch() {
    let rows: Vec<DiagramRow> = [(0.01, 0, 1), (0.5, 0, 1), (1.0, 0, 2), (5.0, 0, 3), (1.0, 1, 2), (5.0, 1, 2)]
        .iter()
        .map(|&(theta, branch_id, n_state_groups)| DiagramRow { theta, branch_id, n_state_groups })
        .collect();
    let svg = bifurcation_svg(&rows);
    let doc = parse(&svg);
    let lines: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("branch")).collect();
    assert_eq!(lines.len(), 2);
    let pts: Vec<(f64, f64)> = lines[0]
        .attribute("points")
        .unwrap()
        .split(' ')
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    let vertical = pts.windows(2).filter(|w| w[0].0 == w[1].0 && w[0].1 != w[1].1).count();
    assert_eq!(vertical, 2);
}

#[test]
fn names_are_escaped() {
    let svg = learning_curve_svg(&[("a<b&c".to_string(), vec![1.0])]);
    parse(&svg);
}
