use std::path::PathBuf;

use jesp_core::model::Provenance;
use jesp_core::{emit_pomdp, flatten_mpomdp, parse_dpomdp, parse_pomdp, Error};

fn problem(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn dectiger_dimensions() {
    let (d, diag) = parse_dpomdp(&problem("dectiger.dpomdp")).unwrap();
    assert!(diag.is_clean());
    assert_eq!(d.n_agents(), 2);
    assert_eq!(d.n_states(), 2);
    assert!(d.agents.iter().all(|a| a.actions.len() == 3 && a.observations.len() == 2));
    let mp = flatten_mpomdp(&d).unwrap();
    assert_eq!((mp.n_actions(), mp.n_observations()), (9, 4));
    assert_eq!(d.reward[0], vec![-2.0, -2.0]);
    // listen/open-left from tiger-left.
    assert_eq!(d.reward[1][0], -101.0);
}

#[test]
fn degenerate_model() {
    let text = "discount: 0.5\nstates: 1\nactions: 1\nobservations: 1\nT: * : * : * 1.0\nO: * : * : * 1.0\nR: * : * : * : * 3\n";
    let (m, _) = parse_pomdp(text).unwrap();
    assert_eq!((m.n_states(), m.n_actions(), m.n_observations()), (1, 1, 1));
    assert_eq!(m.transition[0][0], vec![(0, 1.0)]);
    assert_eq!(m.reward[0][0], 3.0);
    let (again, _) = parse_pomdp(&emit_pomdp(&m)).unwrap();
    assert_eq!(again, m);
}

#[test]
fn tiger_pomdp_inline_dialect() {
    let (m, diag) = parse_pomdp(&problem("tiger.pomdp")).unwrap();
    assert!(diag.is_clean());
    assert_eq!(m.discount, 0.95);
    assert_eq!(m.observation[0][0], vec![(0, 0.85), (1, 0.15)]);
    assert_eq!(m.reward[1], vec![-100.0, 10.0]);
    assert_eq!(m.transition[2][1], vec![(0, 0.5), (1, 0.5)]);
}

#[test]
fn wildcards_equal_explicit_enumeration() {
    let head = "agents: 2\ndiscount: 0.9\nstates: a b\nactions:\nx y\nx y\nobservations:\np q\np q\n";
    let wild = format!(
        "{head}T: * : * : * : 0.5\nO: * : * : * * : 0.25\nR: x * : a : * : * : 1\nR: * * : * : * : * : 0\nR: y y : b : * : * : 4\n"
    );
    let mut explicit = String::from(head);
    for a1 in ["x", "y"] {
        for a2 in ["x", "y"] {
            for s in ["a", "b"] {
                for s2 in ["a", "b"] {
                    explicit += &format!("T: {a1} {a2} : {s} : {s2} : 0.5\n");
                }
                for o1 in ["p", "q"] {
                    for o2 in ["p", "q"] {
                        explicit += &format!("O: {a1} {a2} : {s} : {o1} {o2} : 0.25\n");
                    }
                }
                let r = if a1 == "y" && a2 == "y" && s == "b" { 4 } else { 0 };
                explicit += &format!("R: {a1} {a2} : {s} : * : * : {r}\n");
            }
        }
    }
    let (w, _) = parse_dpomdp(&wild).unwrap();
    let (e, _) = parse_dpomdp(&explicit).unwrap();
    assert_eq!(w, e);
}

#[test]
fn higher_arity_rewards_are_expectations() {
    // From s0 under a: next state s0 or s1 with 0.5 each; observation o0 is
    // certain in s0 and 0.25 likely in s1.
    let text = "discount: 0.9\nstates: 2\nactions: 1\nobservations: 2\n\
        T: 0 : 0 : 0 0.5\nT: 0 : 0 : 1 0.5\nT: 0 : 1 : 1 1\n\
        O: 0 : 0 : 0 1\nO: 0 : 1\n0.25 0.75\n\
        R: 0 : 0 : * : * 1\nR: 0 : 0 : 1 : 0 9\nR: 0 : 1 : * : * -1\n";
    let (m, _) = parse_pomdp(text).unwrap();
    // 0.5·1 + 0.5·(0.25·9 + 0.75·1)
    assert!((m.reward[0][0] - 2.0).abs() < 1e-12);
    assert_eq!(m.reward[0][1], -1.0);
}

#[test]
fn cost_values_are_negated() {
    let text = "discount: 0.9\nvalues: cost\nstates: 1\nactions: 1\nobservations: 1\nT: * : * : * 1\nO: * : * : * 1\nR: * : * : * : * 2\n";
    assert_eq!(parse_pomdp(text).unwrap().0.reward[0][0], -2.0);
}

#[test]
fn small_rounding_is_repaired_with_warning() {
    let text = "discount: 0.9\nstates: 2\nactions: 1\nobservations: 1\nT: 0 : 0\n0.3333333 0.6666666\nT: 0 : 1 : 1 1\nO: * : * : * 1\n";
    let (m, diag) = parse_pomdp(text).unwrap();
    assert_eq!(diag.renormalized_rows, 1);
    let sum: f64 = m.transition[0][0].iter().map(|e| e.1).sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn large_normalization_error_is_rejected() {
    let text = "discount: 0.9\nstates: 2\nactions: 1\nobservations: 1\nT: 0 : 0\n0.3 0.6\nT: 0 : 1 : 1 1\nO: * : * : * 1\n";
    assert!(matches!(parse_pomdp(text), Err(Error::Normalization { .. })));
}

#[test]
fn syntax_and_identifier_errors_carry_lines() {
    let unknown = "discount: 0.9\nstates: a b\nactions: x\nobservations: o\nT: x : c : a 1\n";
    match parse_pomdp(unknown) {
        Err(Error::UnknownIdentifier { line, name }) => {
            assert_eq!(line, 5);
            assert_eq!(name, "c");
        }
        other => panic!("unexpected {other:?}"),
    }
    let bad_number = "discount: 0.9\nstates: 1\nactions: 1\nobservations: 1\nT: 0 : 0 : 0 one\n";
    assert!(matches!(parse_pomdp(bad_number), Err(Error::Syntax { line: 5, .. })));
    let stray = "hello\n";
    assert!(matches!(parse_pomdp(stray), Err(Error::Syntax { line: 1, .. })));
    let short_row = "discount: 0.9\nstates: 3\nactions: 1\nobservations: 1\nT: 0 : 0\n0.5 0.5\n";
    assert!(matches!(parse_pomdp(short_row), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn start_variants() {
    let base = "discount: 0.9\nstates: a b c\nactions: x\nobservations: o\nT: x\nidentity\nO: * : * : * 1\n";
    let (m, _) = parse_pomdp(&format!("{base}start: b\n")).unwrap();
    assert_eq!(m.initial.entries(), &[(1, 1.0)]);
    let (m, _) = parse_pomdp(&format!("{base}start include: a c\n")).unwrap();
    assert_eq!(m.initial.entries(), &[(0, 0.5), (2, 0.5)]);
    let (m, _) = parse_pomdp(&format!("{base}start exclude: a\n")).unwrap();
    assert_eq!(m.initial.entries(), &[(1, 0.5), (2, 0.5)]);
    let (m, _) = parse_pomdp(&format!("{base}start: 0.25 0 0.75\n")).unwrap();
    assert_eq!(m.initial.entries(), &[(0, 0.25), (2, 0.75)]);
    let (m, _) = parse_pomdp(base).unwrap();
    assert_eq!(m.initial.len(), 3);
}

#[test]
fn crlf_and_comments() {
    let text = "# header\r\ndiscount: 0.9 # trailing\r\nstates: 1\r\nactions: 1\r\nobservations: 1\r\nT: * : * : * 1.0\r\nO: * : * : * 1.0\r\n";
    assert!(parse_pomdp(text).is_ok());
}

#[test]
fn emitted_mpomdp_round_trips() {
    let (d, _) = parse_dpomdp(&problem("dectiger.dpomdp")).unwrap();
    let mp = flatten_mpomdp(&d).unwrap();
    let text = emit_pomdp(&mp);
    let (mut back, _) = parse_pomdp(&text).unwrap();
    assert_eq!((back.n_actions(), back.n_observations()), (9, 4));
    back.provenance = mp.provenance.clone();
    assert_eq!(back, mp);
    assert!(matches!(mp.provenance, Provenance::Mpomdp { .. }));
}
