//! Service-mode checks: endpoint contracts against a live server, and a
//! full scenario run driven over HTTP compared with the simulated
//! transport.

use std::net::TcpListener;
use std::path::Path;

use platoon_core::comms::messages::{
    LatchCommandMsg, ResolveStopMsg, ServerRequest, ServerResponse, StatusUpdate, OPERATOR_SENDER,
};
use platoon_core::comms::transport::Transport;
use platoon_core::comms::FleetState;
use platoon_core::harness::runner::{build_server, build_sim_transport, run};
use platoon_core::latch::{CommandOrigin, CommandVerb, LatchMode};
use platoon_core::planner::PlanKind;
use platoon_core::scenario::Scenario;
use platoon_core::world::{AgentId, Pose2D};
use platoon_http::{serve, HttpTransport};

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    Scenario::from_path(&path).expect("scenario loads")
}

fn spawn(scenario_name: &str) -> (platoon_http::ServerHandle, HttpTransport) {
    let sc = scenario(scenario_name);
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let handle = serve(build_server(&sc), listener);
    let transport = HttpTransport::new(handle.base_url());
    (handle, transport)
}

fn status(agent: &str, tick: u64, obstacle_seen: bool) -> StatusUpdate {
    StatusUpdate {
        agent_id: AgentId::from(agent),
        tick,
        pose: Pose2D::new(0.0, 0.0, 0.0),
        latch_mode: LatchMode::Disengaged,
        plan_kind: PlanKind::Idle,
        obstacle_seen,
    }
}

#[test]
fn endpoints_follow_the_protocol() {
    let (handle, mut t) = spawn("follow_straight.toml");
    let f1 = AgentId::from("f1");

    // Status + stop-state cycle.
    t.send(&f1, ServerRequest::SubmitStatus(status("f1", 1, true)), 1);
    t.send(
        &f1,
        ServerRequest::PollSystemState {
            agent_id: f1.clone(),
        },
        1,
    );
    let inbox = t.drain(&f1, 1);
    assert!(matches!(&inbox[0], ServerResponse::Ack(a) if a.ok));
    match &inbox[1] {
        ServerResponse::SystemState(st) => {
            assert_eq!(st.fleet_state, FleetState::Stop);
            assert_eq!(st.version, 1);
        }
        other => panic!("unexpected {other:?}"),
    }

    // Unknown agents are rejected with a reason.
    t.send(
        &f1,
        ServerRequest::PollSystemState {
            agent_id: AgentId::from("ghost"),
        },
        2,
    );
    assert!(matches!(
        t.drain(&f1, 2).pop().unwrap(),
        ServerResponse::Rejected { .. }
    ));

    // Resolve returns the fresh system state.
    t.send(
        &f1,
        ServerRequest::ResolveStop(ResolveStopMsg {
            agent_id: f1.clone(),
            tick: 3,
        }),
        3,
    );
    match t.drain(&f1, 3).pop().unwrap() {
        ServerResponse::SystemState(st) => assert_eq!(st.fleet_state, FleetState::Run),
        other => panic!("unexpected {other:?}"),
    }

    // Latch command submit + drain.
    let cmd = LatchCommandMsg {
        sender: AgentId::from(OPERATOR_SENDER),
        target: f1.clone(),
        verb: CommandVerb::Engage,
        origin: CommandOrigin::Operator,
        tick: 4,
    };
    assert!(matches!(
        t.admin_submit(ServerRequest::SubmitLatchCommand(cmd.clone())),
        ServerResponse::Ack(_)
    ));
    t.send(
        &f1,
        ServerRequest::PollLatchCommands {
            agent_id: f1.clone(),
        },
        4,
    );
    match t.drain(&f1, 4).pop().unwrap() {
        ServerResponse::LatchCommands(cmds) => assert_eq!(cmds, vec![cmd]),
        other => panic!("unexpected {other:?}"),
    }

    handle.shutdown();
}

#[test]
fn http_run_matches_sim_event_sequences() {
    let sc = scenario("sim_http_parity.toml");

    let dir_sim = tempfile::tempdir().unwrap();
    let sim = run(&sc, &mut build_sim_transport(&sc), "sim", dir_sim.path()).unwrap();

    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let handle = serve(build_server(&sc), listener);
    let mut transport = HttpTransport::new(handle.base_url());
    let dir_http = tempfile::tempdir().unwrap();
    let http = run(&sc, &mut transport, "http", dir_http.path()).unwrap();
    handle.shutdown();

    assert_eq!(sim.metrics.latch_events, http.metrics.latch_events);
    assert_eq!(sim.metrics.plan_transitions, http.metrics.plan_transitions);
    assert_eq!(
        sim.metrics.stop_events.len(),
        http.metrics.stop_events.len()
    );
}
