mod common;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use common::*;
use i3_cli::{EXIT_DOMAIN, EXIT_OK, EXIT_TRANSPORT};
use i3_core::broker::MethodSignature;
use i3_core::container::{Container, ImplementationRegistry, ServiceImplementation};
use i3_core::envelope::{Envelope, Fault, FaultCode, MappingTable, Value, ValueKind};
use i3_core::node::ServiceKind;
use i3_core::rpc::{exchange_envelope, http_client, BrokerClient};
use i3_core::server::{self, Surface};
use i3_core::wsdd::{parse_wsdd, Descriptor};
use proptest::prelude::*;

const ALL: fn() -> Vec<ServiceKind> = || {
    vec![
        ServiceKind::Amis,
        ServiceKind::Lmis,
        ServiceKind::Hmis,
        ServiceKind::Emis,
    ]
};

#[tokio::test(flavor = "multi_thread")]
async fn deploy_file1_prints_three_names() {
    let store = tempfile::tempdir().unwrap();
    let broker = broker().await;
    let mut cfg = i3_core::node::NodeConfig::new(
        vec![ServiceKind::Amis, ServiceKind::Lmis, ServiceKind::Hmis],
        store.path(),
        broker.url(),
    );
    cfg.timeout = Duration::from_secs(2);
    let node = i3_core::node::Node::start(listener().await, cfg, &[]).await.unwrap();
    let container = node.url().to_string();

    let (code, out, err) = run(&["deploy", "--wsdd", FILE1, "--container", &container]).await;
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(
        text(&out).lines().collect::<Vec<_>>(),
        [
            "AdmissionDataBaseManagerService",
            "LibraryDataBaseManagerService",
            "HostelDataBaseManagerService"
        ]
    );
    // deploying again conflicts on every endpoint
    let (code, _, err) = run(&["deploy", "--wsdd", FILE1, "--container", &container]).await;
    assert_eq!(code, EXIT_DOMAIN);
    assert!(err.contains("endpoint conflict"), "{err}");

    let (code, out, err) = run(&["undeploy", "--wsdd", UNDEPLOY_FILE1, "--container", &container]).await;
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(text(&out).lines().count(), 3);
    // a descriptor of the wrong kind is refused by the container
    let (code, _, _) = run(&["undeploy", "--wsdd", FILE1, "--container", &container]).await;
    assert_eq!(code, EXIT_DOMAIN);

    node.kill().await.unwrap();
    let (code, _, _) = run(&["deploy", "--wsdd", FILE1, "--container", &container]).await;
    assert_eq!(code, EXIT_TRANSPORT);
    broker.stop().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn call_unknown_service_is_a_no_such_service_fault() {
    let broker = broker().await;
    let url = broker.url().to_string();
    let (code, out, _) = run(&["call", "--broker", &url, "--service", "NoSuchThing", "--method", "m"]).await;
    assert_eq!(code, EXIT_DOMAIN);
    assert!(text(&out).starts_with("Fault Server.NoSuchService"), "{}", text(&out));

    let (code, out, _) = run(&[
        "call",
        "--broker",
        &url,
        "--service",
        "NoSuchThing",
        "--method",
        "m",
        "--output",
        "xml",
    ])
    .await;
    assert_eq!(code, EXIT_DOMAIN);
    assert!(text(&out).contains("<i3:code>Server.NoSuchService</i3:code>"));

    broker.stop().await.unwrap();
    let (code, _, err) = run(&["call", "--broker", &url, "--service", "NoSuchThing", "--method", "m"]).await;
    assert_eq!(code, EXIT_TRANSPORT, "{err}");
}

#[tokio::test(flavor = "multi_thread")]
async fn seeded_defaulter_fails_verification() {
    let store = tempfile::tempdir().unwrap();
    let broker = broker().await;
    let node = node(&broker.url(), ALL(), store.path(), None, Duration::from_secs(2)).await;
    let b = broker.url().to_string();

    let (code, out, err) = run(&["seed", "--broker", &b, "--fixture", FIXTURE]).await;
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(text(&out).contains("students.csv"), "{}", text(&out));
    // a second seeding finds everything in place
    let (code, out, err) = run(&["seed", "--broker", &b, "--fixture", FIXTURE, "--output", "json"]).await;
    assert_eq!(code, EXIT_OK, "{err}");
    let tallies: serde_json::Value = serde_json::from_slice(&out).unwrap();
    for t in tallies.as_array().unwrap() {
        if t["file"] != "results.csv" && t["file"] != "students.csv (members)" {
            assert_eq!(t["added"], 0, "{t}");
        }
    }

    let (code, out, _) = run(&["verify", "--broker", &b, "--student", "S-2022-0004"]).await;
    assert_eq!(code, EXIT_DOMAIN);
    let table = text(&out);
    assert!(
        table.lines().any(|l| l.starts_with("Library") && l.contains("Dues")),
        "{table}"
    );
    assert!(table.contains("B-0003"), "{table}");
    assert!(table.contains("overall     Blocked"), "{table}");

    let (code, out, _) = run(&["verify", "--broker", &b, "--student", "S-2022-0001", "--output", "json"]).await;
    assert_eq!(code, EXIT_OK);
    let status: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(status["overall"], "Clear");

    let (code, out, _) = run(&[
        "issue",
        "--broker",
        &b,
        "--student",
        "S-2022-0004",
        "--programme",
        "BE-SW",
    ])
    .await;
    assert_eq!(code, EXIT_DOMAIN);
    assert!(text(&out).starts_with("refused: DuesOutstanding"), "{}", text(&out));

    let (code, out, _) = run(&[
        "issue",
        "--broker",
        &b,
        "--student",
        "S-2022-0002",
        "--programme",
        "BE-SW",
    ])
    .await;
    assert_eq!(code, EXIT_DOMAIN);
    assert!(text(&out).contains("NotEligible"), "{}", text(&out));

    let (code, out, err) = run(&[
        "issue",
        "--broker",
        &b,
        "--student",
        "S-2022-0001",
        "--programme",
        "BE-SW",
    ])
    .await;
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(text(&out).starts_with("certificate C-"), "{}", text(&out));

    node.kill().await.unwrap();
    broker.stop().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn xml_output_is_the_wire_reply() {
    let store = tempfile::tempdir().unwrap();
    let broker = broker().await;
    let node = node(&broker.url(), ALL(), store.path(), None, Duration::from_secs(2)).await;
    let b = broker.url().to_string();
    run(&["seed", "--broker", &b, "--fixture", FIXTURE]).await;

    let http = http_client();
    let amis = node.url().join("services/AdmissionDataBaseManagerService").unwrap();
    let mappings = node
        .container
        .service("AdmissionDataBaseManagerService")
        .unwrap()
        .mappings()
        .clone();
    for (method, arg) in [
        ("getStudent", "S-2022-0001"),
        ("getStudent", "S-1999-0000"),
        ("searchStudents", "memon"),
    ] {
        let (code, out, _) = run(&[
            "call",
            "--broker",
            &b,
            "--service",
            "AdmissionDataBaseManagerService",
            "--method",
            method,
            "--arg",
            &format!("s:{arg}"),
            "--output",
            "xml",
        ])
        .await;
        let env = Envelope::call("AdmissionDataBaseManagerService", method, vec![Value::text(arg)]);
        let (wire, reply) = exchange_envelope(&http, amis.clone(), &env, &mappings).await.unwrap();
        assert_eq!(out, wire, "{method} {arg}");
        assert_eq!(code, if reply.is_fault() { EXIT_DOMAIN } else { EXIT_OK });
    }

    node.kill().await.unwrap();
    broker.stop().await.unwrap();
}

/// Raises whatever fault it is asked to.
struct Raiser;

#[async_trait]
impl ServiceImplementation for Raiser {
    fn id(&self) -> &str {
        "Raiser"
    }

    fn methods(&self) -> Vec<MethodSignature> {
        vec![
            MethodSignature::new(
                "raise",
                &[ValueKind::Int, ValueKind::Text, ValueKind::Text],
                ValueKind::Nil,
            ),
            MethodSignature::new("echo", &[ValueKind::Text], ValueKind::Text),
        ]
    }

    fn record_types(&self) -> Vec<String> {
        Vec::new()
    }

    async fn invoke(&self, method: &str, args: Vec<Value>) -> Result<Value, Fault> {
        match (method, args.as_slice()) {
            ("raise", [Value::Int(i), Value::Text(reason), Value::Text(detail)]) => Err(Fault::new(
                FaultCode::ALL[*i as usize % FaultCode::ALL.len()],
                reason.clone(),
                detail.clone(),
            )),
            ("echo", [v]) => Ok(v.clone()),
            _ => Err(Fault::new(FaultCode::BadArguments, "BadArguments", method)),
        }
    }
}

const RAISER_WSDD: &str = r#"<deployment xmlns="http://xml.apache.org/axis/wsdd/">
  <service name="RaiserService" provider="java:RPC">
    <parameter name="className" value="Raiser"/>
    <parameter name="allowedMethods" value="raise echo"/>
  </service>
</deployment>"#;

#[test]
fn every_fault_class_exits_one_and_prints_the_wire_bytes() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let (broker, endpoint) = rt.block_on(async {
        let broker = broker().await;
        let l = listener().await;
        let mut impls = ImplementationRegistry::new();
        impls.register(Arc::new(Raiser));
        let container = Arc::new(
            Container::new(server::base_url(l.local_addr().unwrap()), impls)
                .with_publisher(Arc::new(BrokerClient::new(broker.url()))),
        );
        let Descriptor::Deployment(d) = parse_wsdd(RAISER_WSDD.as_bytes()).unwrap() else {
            panic!()
        };
        server::spawn(
            l,
            server::router(Surface {
                container: Some(container.clone()),
                ..Surface::default()
            }),
        )
        .unwrap();
        assert!(container.deploy(&d).await.failed.is_empty());
        (broker, container.endpoint_for("RaiserService"))
    });
    let b = broker.url().to_string();
    let http = http_client();

    let (code, out, _) = rt.block_on(run(&[
        "call",
        "--broker",
        &b,
        "--service",
        "RaiserService",
        "--method",
        "echo",
        "--arg",
        "s:hi",
    ]));
    assert_eq!((code, text(&out)), (EXIT_OK, "hi\n".to_string()));
    // argument and method mistakes are faults too
    for extra in [
        &["--method", "echo"][..],
        &["--method", "nope"][..],
        &["--method", "echo", "--arg", "i:1"][..],
    ] {
        let mut argv = vec!["call", "--broker", &b, "--service", "RaiserService"];
        argv.extend_from_slice(extra);
        assert_eq!(rt.block_on(run(&argv)).0, EXIT_DOMAIN, "{extra:?}");
    }

    proptest!(ProptestConfig::with_cases(60), |(i in 0i64..6, reason in "[A-Za-z]{1,12}", detail in "\\PC{0,24}")| {
        let args = [format!("i:{i}"), format!("s:{reason}"), format!("s:{detail}")];
        let mut argv = vec!["call", "--broker", &b, "--service", "RaiserService", "--method", "raise", "--output", "xml"];
        for a in &args {
            argv.extend_from_slice(&["--arg", a]);
        }
        let (code, out, _) = rt.block_on(run(&argv));
        prop_assert_eq!(code, EXIT_DOMAIN);
        let env = Envelope::call(
            "RaiserService",
            "raise",
            vec![Value::Int(i), Value::text(reason.clone()), Value::text(detail.clone())],
        );
        let (wire, reply) = rt
            .block_on(exchange_envelope(&http, endpoint.clone(), &env, &MappingTable::empty()))
            .unwrap();
        prop_assert!(reply.is_fault());
        prop_assert_eq!(&out, &wire);

        argv.truncate(argv.len() - 2 * args.len() - 2);
        for a in &args {
            argv.extend_from_slice(&["--arg", a]);
        }
        let (code, out, _) = rt.block_on(run(&argv));
        prop_assert_eq!(code, EXIT_DOMAIN);
        let expected = format!("Fault {}: {reason}", FaultCode::ALL[i as usize].as_str());
        prop_assert!(text(&out).starts_with(&expected), "{}", text(&out));
    });

    rt.block_on(broker.stop()).unwrap();
}
