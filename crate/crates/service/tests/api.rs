mod common;

use common::*;
use dlot_core::export::{self, Format};
use dlot_core::journal;
use dlot_core::{ObservationStatus, Timestamp};
use dlot_service::{Ack, ManualClock, StreamEvent};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;

fn clock() -> ManualClock {
    ManualClock::new(Timestamp::from_millis(T0))
}

async fn running_session(h: &Harness, id: &str, subjects: usize, interval: i64, observers: &[&str]) -> Vec<String> {
    let mode = if subjects == 1 { "single_subject" } else { "round_robin" };
    assert_eq!(h.create(&config_doc(id, subjects, interval, observers, mode)).await.status(), 201);
    let mut tokens = Vec::new();
    for o in observers {
        tokens.push(h.join(id, o).await.token);
    }
    assert_eq!(h.post(&format!("/sessions/{id}/start")).await.status(), 200);
    tokens
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn create_validates_and_rejects_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(dir.path(), clock()).await;

    let resp = h.create(&config_doc("study-2", 1, 10_000, &["o1"], "single_subject")).await;
    assert_eq!(resp.status(), 201);
    assert_eq!(resp.headers()["location"], "/sessions/study-2");
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body, json!({"session_id": "study-2", "phase": "created"}));

    let again = h.create(&config_doc("study-2", 1, 10_000, &["o1"], "single_subject")).await;
    assert_eq!(again.status(), 409);

    let mut bad = config_doc("broken", 0, 100, &["o1"], "round_robin");
    bad["scheme"]["groups"][0]["labels"] = json!(["engaged", "engaged"]);
    let resp = h.create(&bad).await;
    assert_eq!(resp.status(), 400);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"], "invalid_config");
    let paths: Vec<&str> = body["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["path"].as_str().unwrap())
        .collect();
    assert_eq!(paths.len(), 3, "{body}");

    let resp = h
        .http
        .post(h.url("/sessions"))
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["violations"][0]["path"], "$");

    let status: Value = h.get("/sessions/study-2").await.json().await.unwrap();
    assert_eq!(status["phase"], "created");
    assert_eq!(status["config"]["timer"]["interval_ms"], 10_000);
    assert_eq!(status["config"]["created_at"], "2023-11-14T22:13:20.000Z");
    assert_eq!(h.get("/sessions/nope").await.status(), 404);
    let ids: Vec<String> = h.get("/sessions").await.json().await.unwrap();
    assert_eq!(ids, vec!["study-2"]);
    h.service.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn observers_join_once() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(dir.path(), clock()).await;
    h.create(&config_doc("s", 3, 5000, &["o1", "o2"], "round_robin")).await;
    let a = h.join("s", "o1").await;
    assert_eq!(a.observer_id, "o1");
    assert_eq!(a.token.len(), 32);
    let dup = h
        .http
        .post(h.url("/sessions/s/observers"))
        .json(&json!({"observer_id": "o1"}))
        .send()
        .await
        .unwrap();
    assert_eq!(dup.status(), 409);
    let stranger = h
        .http
        .post(h.url("/sessions/s/observers"))
        .json(&json!({"observer_id": "o9"}))
        .send()
        .await
        .unwrap();
    assert_eq!(stranger.status(), 422);
    let status: Value = h.get("/sessions/s").await.json().await.unwrap();
    assert_eq!(status["observers"], json!([{"observer_id": "o1", "joined": true}, {"observer_id": "o2", "joined": false}]));
    h.service.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn submissions_are_idempotent_and_deadlines_are_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(dir.path(), clock()).await;
    let tokens = running_session(&h, "s", 3, 5000, &["o1", "o2"]).await;
    assert_eq!(h.post("/sessions/s/start").await.status(), 409);

    h.advance(1200);
    let first = h.submit("s", &tokens[0], &answer(0, "engaged", &["talking"])).await;
    assert_eq!(first.status(), 201);
    let ack: Ack = first.json().await.unwrap();
    assert_eq!(ack.logged_at, Timestamp::from_millis(T0 + 1200));
    assert_eq!(ack.key.subject_id, "s1");

    let retry = h.submit("s", &tokens[0], &answer(0, "engaged", &["talking"])).await;
    assert_eq!(retry.status(), 200);
    assert_eq!(retry.json::<Ack>().await.unwrap(), ack);

    let conflict = h.submit("s", &tokens[0], &answer(0, "boredom", &[])).await;
    assert_eq!(conflict.status(), 409);
    assert_eq!(conflict.json::<Value>().await.unwrap()["error"], "key_conflict");

    let unauth = h.submit("s", "not-a-token", &answer(0, "engaged", &[])).await;
    assert_eq!(unauth.status(), 401);
    let no_header = h
        .http
        .post(h.url("/sessions/s/observations"))
        .json(&answer(0, "engaged", &[]))
        .send()
        .await
        .unwrap();
    assert_eq!(no_header.status(), 401);

    let invalid = h.submit("s", &tokens[1], &answer(0, "sleepy", &[])).await;
    assert_eq!(invalid.status(), 422);
    assert_eq!(invalid.json::<Value>().await.unwrap()["error"], "invalid_submission");
    let future = h.submit("s", &tokens[1], &answer(4, "engaged", &[])).await;
    assert_eq!(future.json::<Value>().await.unwrap()["error"], "unknown_prompt");

    // one millisecond past the deadline of prompt 0
    h.clock.advance(5000 - 1200 + 1);
    let late = h.submit("s", &tokens[1], &answer(0, "engaged", &[])).await;
    assert_eq!(late.status(), 409);
    assert_eq!(late.json::<Value>().await.unwrap()["error"], "late");

    let slot = h.service.registry.get("s").unwrap();
    let observations = dlot_service::registry::lock(&slot).state().observations().to_vec();
    assert_eq!(observations.len(), 2);
    assert_eq!(observations[1].observer_id, "o2");
    assert_eq!(observations[1].status, ObservationStatus::Missed);
    assert_eq!(observations[1].logged_at, Timestamp::from_millis(T0 + 5000));
    h.service.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn two_observers_see_the_same_prompts() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(dir.path(), clock()).await;
    let tokens = running_session(&h, "s", 4, 5000, &["o1", "o2"]).await;
    let mut a = h.stream("s", &tokens[0]).await;
    let mut b = h.stream("s", &tokens[1]).await;
    for _ in 0..6 {
        h.advance(5000);
    }
    h.post("/sessions/s/end").await;

    let mut transcripts = Vec::new();
    for ws in [&mut a, &mut b] {
        let mut seen = Vec::new();
        while let Some(event) = next_event(ws).await {
            seen.push(event);
        }
        transcripts.push(seen);
    }
    assert_eq!(transcripts[0], transcripts[1]);
    let t = &transcripts[0];
    // replayed prompt 0, then six expiry/open pairs, the final expiry and the end
    assert!(matches!(&t[0], StreamEvent::PromptOpened { replay: true, prompt, .. } if prompt.prompt_index == 0));
    let indices: Vec<Option<u64>> = t[1..].iter().map(StreamEvent::prompt_index).collect();
    let mut expected = Vec::new();
    for i in 0..6 {
        expected.push(Some(i));
        expected.push(Some(i + 1));
    }
    expected.push(Some(6));
    expected.push(None);
    assert_eq!(indices, expected);
    assert!(matches!(t.last(), Some(StreamEvent::SessionEnded { .. })));
    h.service.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn reconnect_replays_the_open_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(dir.path(), clock()).await;
    let tokens = running_session(&h, "s", 30, 5000, &["o1"]).await;
    h.advance(7 * 5000 + 300);
    h.submit("s", &tokens[0], &answer(7, "neutral", &[])).await;

    let mut ws = h.stream("s", &tokens[0]).await;
    match next_event(&mut ws).await.unwrap() {
        StreamEvent::PromptOpened {
            prompt,
            prompts_issued,
            replay,
            answered,
            subject_name,
        } => {
            assert_eq!(prompt.prompt_index, 7);
            assert_eq!(prompt.subject_id.as_deref(), Some("s8"));
            assert_eq!(subject_name.as_deref(), Some("Student 8"));
            assert_eq!(prompts_issued, 8);
            assert!(replay);
            assert!(answered);
        }
        other => panic!("unexpected first message {other:?}"),
    }
    h.service.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn idle_streams_get_heartbeats() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(dir.path(), clock()).await;
    h.create(&config_doc("s", 2, 5000, &["o1"], "round_robin")).await;
    let token = h.join("s", "o1").await.token;
    let mut ws = h.stream("s", &token).await;
    // not started: the first message is a heartbeat, and more follow
    for _ in 0..3 {
        match receive(&mut ws).await {
            Received::Event(StreamEvent::Heartbeat { prompts_issued, .. }) => assert_eq!(prompts_issued, 0),
            _ => panic!("expected heartbeat"),
        }
    }
    h.service.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn streams_close_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(dir.path(), clock()).await;
    let tokens = running_session(&h, "s", 2, 5000, &["o1"]).await;
    let mut bad = h.stream("s", "wrong").await;
    match receive(&mut bad).await {
        Received::Closed(Some((code, reason))) => {
            assert_eq!(code, CloseCode::Policy);
            assert_eq!(reason, "invalid token");
        }
        _ => panic!("expected a policy close"),
    }

    let mut ws = h.stream("s", &tokens[0]).await;
    next_event(&mut ws).await.unwrap();
    h.post("/sessions/s/end").await;
    let mut last = None;
    loop {
        match receive(&mut ws).await {
            Received::Event(e) => last = Some(e),
            Received::Closed(frame) => {
                assert_eq!(frame.unwrap().0, CloseCode::Normal);
                break;
            }
        }
    }
    assert!(matches!(last, Some(StreamEvent::SessionEnded { .. })));

    // connecting after the end yields the end and a close
    let mut late = h.stream("s", &tokens[0]).await;
    assert!(matches!(next_event(&mut late).await, Some(StreamEvent::SessionEnded { .. })));
    assert!(next_event(&mut late).await.is_none());
    assert_eq!(h.post("/sessions/s/end").await.status(), 409);
    h.service.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn export_matches_the_journal_and_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let clock = clock();
    let h = Harness::start(dir.path(), clock.clone()).await;
    let tokens = running_session(&h, "s", 3, 5000, &["o1", "o2"]).await;
    for prompt in 0..5u64 {
        h.advance(100);
        h.submit("s", &tokens[0], &answer(prompt, "engaged", &["on task", "talking"])).await;
        if prompt % 2 == 0 {
            h.submit("s", &tokens[1], &answer(prompt, "confusion", &[])).await;
        }
        h.advance(4900);
    }

    let csv = h.get("/sessions/s/export?format=csv").await;
    assert_eq!(csv.headers()["content-type"], Format::Csv.content_type());
    assert_eq!(csv.headers()["content-disposition"], "attachment; filename=\"s.csv\"");
    let csv = csv.bytes().await.unwrap();
    let xlsx = h.get("/sessions/s/export?format=xlsx").await.bytes().await.unwrap();
    assert_eq!(h.get("/sessions/s/export?format=docx").await.status(), 400);

    let bytes = std::fs::read(journal::journal_path(dir.path(), "s")).unwrap();
    let (state, report) = journal::replay(&bytes).unwrap();
    assert!(report.is_clean());
    let table = export::to_rows(&state);
    assert_eq!(&csv[..], &export::write_csv(&table)[..]);
    assert_eq!(&xlsx[..], &export::write_xlsx(&table)[..]);
    assert!(String::from_utf8_lossy(&csv).contains("on task;talking"));

    h.service.shutdown().await.unwrap();
    let h = Harness::start(dir.path(), clock).await;
    assert_eq!(h.service.recovered.len(), 1);
    assert!(h.service.recovered[0].error.is_none());
    let again = h.get("/sessions/s/export?format=csv").await.bytes().await.unwrap();
    assert_eq!(again, csv);
    let status: Value = h.get("/sessions/s").await.json().await.unwrap();
    assert_eq!(status["phase"], "running");
    assert_eq!(status["prompts_issued"], 6);
    // tokens do not survive a restart; observers join again
    let token = h.join("s", "o1").await.token;
    let retry = h.submit("s", &token, &answer(4, "engaged", &["on task", "talking"])).await;
    assert_eq!(retry.status(), 200);
    h.service.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn serves_a_landing_page() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(dir.path(), clock()).await;
    let resp = h.get("/").await;
    assert_eq!(resp.status(), 200);
    assert!(resp.text().await.unwrap().contains("observation server"));
    h.service.shutdown().await.unwrap();
}
