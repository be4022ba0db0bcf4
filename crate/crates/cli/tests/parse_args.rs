use std::path::PathBuf;
use std::time::Duration;

use i3_cli::args::{SeedTarget, ServeArgs};
use i3_cli::config::Defaults;
use i3_cli::{parse_args_with, Command, OutputFormat, EXIT_USAGE};
use i3_core::envelope::Value;
use i3_core::node::ServiceKind;

const FILE1: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/wsdd/file1.wsdd");
const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/uos-demo");

fn parse(argv: &[&str]) -> Result<i3_cli::Invocation, i3_cli::UsageError> {
    let mut full = vec!["i3"];
    full.extend_from_slice(argv);
    parse_args_with(full, &Defaults::default())
}

#[test]
fn deploy_maps_wsdd_and_container() {
    let inv = parse(&["deploy", "--wsdd", FILE1, "--container", "http://h:1"]).unwrap();
    assert_eq!(
        inv.command,
        Command::Deploy {
            wsdd: PathBuf::from(FILE1),
            container: "http://h:1/".parse().unwrap(),
        }
    );
    assert_eq!(inv.output, OutputFormat::Text);
}

#[test]
fn verify_without_student_is_a_usage_error() {
    let e = parse(&["verify"]).unwrap_err();
    assert_eq!(e.exit_code, EXIT_USAGE);
    assert!(e.text.contains("--student"), "{}", e.text);
}

#[test]
fn call_takes_typed_arguments() {
    let inv = parse(&["call", "--service", "X", "--method", "m", "--arg", "s:hello"]).unwrap();
    let Command::Call {
        service, method, args, ..
    } = inv.command
    else {
        panic!("{:?}", inv.command)
    };
    assert_eq!((service.as_str(), method.as_str()), ("X", "m"));
    assert_eq!(args, vec![Value::text("hello")]);

    let inv = parse(&[
        "call",
        "--service",
        "X",
        "--method",
        "m",
        "--arg",
        "i:-3",
        "--arg",
        "nil",
    ])
    .unwrap();
    let Command::Call { args, .. } = inv.command else {
        panic!()
    };
    assert_eq!(args, vec![Value::Int(-3), Value::Nil]);
    assert_eq!(
        parse(&["call", "--service", "X", "--method", "m", "--arg", "hello"])
            .unwrap_err()
            .exit_code,
        EXIT_USAGE
    );
}

#[test]
fn unknown_flags_and_subcommands_fail_with_usage() {
    for argv in [
        &["verify", "--student", "S-2024-0001", "--bogus"][..],
        &["launch"][..],
        &[][..],
        &["deploy", "--wsdd", FILE1, "--container", "not a url"][..],
        &["serve", "--services", "amis,library"][..],
        &["--output", "yaml", "verify", "--student", "x"][..],
    ] {
        let e = parse(argv).unwrap_err();
        assert_eq!(e.exit_code, EXIT_USAGE, "{argv:?}");
        assert!(!e.text.is_empty());
    }
}

#[test]
fn missing_files_are_caught_before_any_network_activity() {
    let e = parse(&["deploy", "--wsdd", "/nonexistent/f.wsdd", "--container", "http://h:1"]).unwrap_err();
    assert_eq!(e.exit_code, EXIT_USAGE);
    let e = parse(&["seed", "--fixture", "/nonexistent/dir"]).unwrap_err();
    assert_eq!(e.exit_code, EXIT_USAGE);
}

#[test]
fn help_is_not_an_error() {
    let e = parse(&["--help"]).unwrap_err();
    assert_eq!(e.exit_code, 0);
    assert!(e.text.contains("verify"));
}

#[test]
fn broker_url_precedence() {
    let defaults = Defaults {
        broker_url: Some("http://configured:9".into()),
        timeout_ms: Some(750),
        store_dir: Some(PathBuf::from("/srv/i3")),
    };
    let inv = parse_args_with(["i3", "verify", "--student", "S-2024-0001"], &defaults).unwrap();
    assert_eq!(
        inv.command,
        Command::Verify {
            broker: "http://configured:9/".parse().unwrap(),
            student: "S-2024-0001".into(),
            timeout: Duration::from_millis(750),
        }
    );
    let inv = parse_args_with(
        ["i3", "verify", "--student", "S-2024-0001", "--broker", "http://flag:1"],
        &defaults,
    )
    .unwrap();
    let Command::Verify { broker, .. } = inv.command else {
        panic!()
    };
    assert_eq!(broker.as_str(), "http://flag:1/");

    let inv = parse_args_with(["i3", "serve", "--services", "amis,campus:JAM"], &defaults).unwrap();
    let Command::Serve(ServeArgs {
        services, store_dir, ..
    }) = inv.command
    else {
        panic!()
    };
    assert_eq!(services, vec![ServiceKind::Amis, ServiceKind::Campus("JAM".into())]);
    assert_eq!(store_dir, PathBuf::from("/srv/i3"));
}

#[test]
fn seed_defaults_to_every_target() {
    let inv = parse(&["seed", "--fixture", FIXTURE]).unwrap();
    let Command::Seed { targets, .. } = inv.command else {
        panic!()
    };
    assert_eq!(targets, SeedTarget::ALL.to_vec());
    let inv = parse(&["seed", "--fixture", FIXTURE, "--targets", "lmis,amis,lmis"]).unwrap();
    let Command::Seed { targets, .. } = inv.command else {
        panic!()
    };
    assert_eq!(targets, vec![SeedTarget::Amis, SeedTarget::Lmis]);
}

#[test]
fn output_flag_is_global() {
    let inv = parse(&["verify", "--student", "S-2024-0001", "--output", "xml"]).unwrap();
    assert_eq!(inv.output, OutputFormat::Xml);
    let inv = parse(&["--output", "json", "verify", "--student", "S-2024-0001"]).unwrap();
    assert_eq!(inv.output, OutputFormat::Json);
}
