//! The HTTP API a remote operator panel talks to.
//!
//! By default this plays the panel itself: it polls `/api/state`, answers
//! each pending request from ground truth over `POST /api/feedback`, and
//! prints the event log when the episode ends. With `--listen PORT` it
//! serves on that port instead, for a real panel or curl:
//!
//! ```text
//! cargo run --example feedback_service
//! cargo run --example feedback_service -- --listen 8080
//! curl localhost:8080/api/state
//! curl -X POST localhost:8080/api/feedback -H 'content-type: application/json' -d '{"label":"competent"}'
//! ```

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use competence_core::embedding::calibrate;
use competence_core::harness::ReplaySession;
use competence_core::memory::{CompetenceLabel, CompetenceMemory};
use competence_core::service::{router, spawn_replay, Pacing, ServiceState};
use competence_core::synth::{
    generate_synthetic_episode, ClusterSpec, ReferenceSpec, SyntheticSpec,
};

async fn call(state: &Arc<ServiceState>, method: &str, uri: &str, body: Option<Value>) -> Value {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let response = router(Arc::clone(state)).oneshot(request).await.unwrap();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    serde_json::from_slice(&bytes).unwrap_or(Value::Null)
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        clusters: vec![
            ClusterSpec {
                name: "corridor".into(),
                center: vec![0.0; 4],
                frames: 4,
                label: CompetenceLabel::Competent,
            },
            ClusterSpec {
                name: "lab".into(),
                center: vec![10.0, 0.0, 0.0, 0.0],
                frames: 4,
                label: CompetenceLabel::Incompetent,
            },
        ],
        noise_radius: 0.1,
        reference: ReferenceSpec::default(),
    };
    let episode = generate_synthetic_episode(&spec, 42)?;
    let calib = calibrate(&episode.reference, 0.5, 1e-9)?;
    let session = ReplaySession::new(calib, CompetenceMemory::new(), 0.5)?;
    let truth: Vec<_> = episode
        .frames
        .iter()
        .map(|f| f.ground_truth_competence.unwrap())
        .collect();

    let state = ServiceState::new(
        &episode.frames,
        Pacing {
            interval: Duration::from_millis(20),
            manual: false,
        },
    );
    spawn_replay(session, episode.frames, Arc::clone(&state), |_| Ok(()));

    let mut args = std::env::args().skip(1);
    if args.next().as_deref() == Some("--listen") {
        let port: u16 = args.next().ok_or("--listen needs a port")?.parse()?;
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state)).await?;
        return Ok(());
    }

    loop {
        let s = call(&state, "GET", "/api/state", None).await;
        if s["finished"] == true {
            break;
        }
        if s["pending_request"] == true {
            let index = s["frame_index"].as_u64().unwrap();
            let label = truth[index as usize];
            println!(
                "frame {index} pending (p_known {}), answering {label}",
                s["p_known"]
            );
            let reply = call(
                &state,
                "POST",
                "/api/feedback",
                Some(json!({ "label": label })),
            )
            .await;
            println!("  -> {reply}");
            let again = call(
                &state,
                "POST",
                "/api/feedback",
                Some(json!({ "label": label, "frame_index": index })),
            )
            .await;
            println!("  duplicate -> {again}");
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }

    for e in call(&state, "GET", "/api/events", None)
        .await
        .as_array()
        .unwrap()
    {
        println!(
            "{:>2} {:<16} p_known {:.3} {}",
            e["frame_index"],
            e["action"].as_str().unwrap(),
            e["p_known"].as_f64().unwrap(),
            e.get("feedback").map_or(String::new(), |f| f.to_string())
        );
    }
    Ok(())
}
