mod support;

use proptest::prelude::*;

use faasforge::metrics::{aggregate, analyze, MetricReport};

use support::{check, if_insertion, js_program, program, python_program, snippets};

#[test]
fn hand_tallied_snippets() {
    for (code, runtime, expected) in snippets() {
        check(code, runtime, &expected).unwrap();
    }
}

#[test]
fn aggregate_uses_median_effort() {
    let reports: Vec<MetricReport> = ["x = 1\n", "x = y + 1\n", "def f(a):\n    return a * a + a\n"]
        .iter()
        .map(|c| analyze(c, "python3").unwrap())
        .collect();
    let mut efforts: Vec<f64> = reports.iter().map(|r| r.effort().unwrap()).collect();
    efforts.sort_by(f64::total_cmp);
    let agg = aggregate(&reports);
    assert_eq!(agg.count, 3);
    assert_eq!(agg.effort_median, Some(efforts[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mi_stays_in_range(stmts in program()) {
        for (code, runtime) in [(python_program(&stmts).join("\n"), "python3"), (js_program(&stmts).join("\n"), "nodejs")] {
            let r = analyze(&code, runtime).unwrap();
            let mi = r.mi.unwrap();
            prop_assert!((0.0..=100.0).contains(&mi), "{mi} for\n{code}");
        }
    }

    #[test]
    fn comments_change_nothing(stmts in program(), at in any::<prop::sample::Index>(), text in "[a-z if and or while(){}:]{0,30}") {
        let plain = python_program(&stmts);
        let mut commented = plain.clone();
        commented.insert(at.index(commented.len() + 1), format!("# {text}"));
        let last = commented.len() - 1;
        commented[last].push_str(&format!("  # {text}"));
        prop_assert_eq!(analyze(&plain.join("\n"), "python3").unwrap(), analyze(&commented.join("\n"), "python3").unwrap());

        let plain = js_program(&stmts);
        let mut commented = plain.clone();
        commented.insert(1, format!("// {text}"));
        commented.insert(0, format!("/* {text}\n   {text} */"));
        prop_assert_eq!(analyze(&plain.join("\n"), "nodejs").unwrap(), analyze(&commented.join("\n"), "nodejs").unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn adding_an_if_adds_a_path(stmts in program(), n in -50i32..50) {
        for (before, after) in if_insertion(&stmts, n) {
            prop_assert_eq!(after, before + 1);
        }
    }
}
