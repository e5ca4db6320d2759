mod common;

use common::{MockServer, Reply};
use feta::reasoner::{CacheRecord, LlmClient, ResponseCache};
use feta::{FetaError, ReasonerConfig};

const KEY_VAR: &str = "FETA_TEST_CLIENT_KEY";

fn config(endpoint: &str, key_var: &str) -> ReasonerConfig {
    std::env::set_var(KEY_VAR, "sk-test");
    ReasonerConfig {
        endpoint: endpoint.into(),
        api_key_env: key_var.into(),
        model: "test-model".into(),
        max_retries: 3,
        backoff_base_ms: 1,
        backoff_max_ms: 5,
        timeout_secs: 5.0,
        ..Default::default()
    }
}

#[test]
fn success_is_cached_and_replayed_without_network() {
    let server = MockServer::start(vec![Reply::ok(r#"{"decision": "a", "confidence": 0.7}"#)]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::new(config(&server.url, KEY_VAR), dir.path());
    let first = client.complete("prompt one").unwrap();
    assert_eq!(first, r#"{"decision": "a", "confidence": 0.7}"#);
    assert_eq!(server.hits(), 1);

    let again = LlmClient::new(config(&server.url, KEY_VAR), dir.path());
    assert_eq!(again.complete("prompt one").unwrap(), first);
    assert_eq!(again.network_calls(), 0);
    assert_eq!(server.hits(), 1);

    let key = ResponseCache::key("test-model", "prompt one");
    let rec = again.cache().get(&key).unwrap();
    assert_eq!(rec.prompt_hash, key);
    assert_eq!(rec.model, "test-model");
    // no temporaries left behind
    let names: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names, vec![format!("{key}.json")]);
}

#[test]
fn request_carries_model_messages_and_sampling() {
    let server = MockServer::start(vec![Reply::ok("{}")]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::new(config(&server.url, KEY_VAR), dir.path());
    client.complete("hello").unwrap();
    let body: serde_json::Value = serde_json::from_str(&server.bodies()[0]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["top_p"], 1.0);
    assert_eq!(body["stream"], false);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "hello");
}

#[test]
fn cache_key_depends_on_model_and_prompt() {
    let a = ResponseCache::key("m1", "p");
    assert_ne!(a, ResponseCache::key("m2", "p"));
    assert_ne!(a, ResponseCache::key("m1", "q"));
    assert_eq!(a, ResponseCache::key("m1", "p"));
    assert_eq!(a.len(), 64);
}

#[test]
fn rate_limit_twice_then_success() {
    let server = MockServer::start(vec![
        Reply::status(429, "slow down").with_header("Retry-After", "0"),
        Reply::status(429, "slow down"),
        Reply::ok(r#"{"decision": "b", "confidence": 0.9}"#),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::new(config(&server.url, KEY_VAR), dir.path());
    let text = client.complete("p").unwrap();
    assert!(text.contains("\"b\""));
    assert_eq!(server.hits(), 3);
    assert_eq!(client.network_calls(), 3);
}

#[test]
fn rate_limit_exhausts_retries() {
    let server = MockServer::start(vec![Reply::status(429, "no")]);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&server.url, KEY_VAR);
    cfg.max_retries = 2;
    let client = LlmClient::new(cfg, dir.path());
    match client.complete("p") {
        Err(FetaError::RateLimited { attempts }) => assert_eq!(attempts, 3),
        other => panic!("expected rate limit, got {other:?}"),
    }
    assert_eq!(server.hits(), 3);
    assert!(ResponseCache::new(dir.path())
        .get(&ResponseCache::key("test-model", "p"))
        .is_none());
}

#[test]
fn server_errors_are_retried() {
    let server = MockServer::start(vec![Reply::status(503, "busy"), Reply::ok("fine")]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::new(config(&server.url, KEY_VAR), dir.path());
    assert_eq!(client.complete("p").unwrap(), "fine");
    assert_eq!(server.hits(), 2);
}

#[test]
fn missing_key_fails_before_any_request() {
    let server = MockServer::start(vec![Reply::ok("unused")]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::new(config(&server.url, "FETA_TEST_UNSET_KEY_VAR"), dir.path());
    assert!(matches!(client.complete("p"), Err(FetaError::AuthFailure(_))));
    assert_eq!(server.hits(), 0);
    assert_eq!(client.network_calls(), 0);
}

#[test]
fn cache_hit_needs_no_key() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ResponseCache::new(dir.path());
    let key = ResponseCache::key("test-model", "p");
    cache
        .put(&CacheRecord {
            prompt_hash: key,
            model: "test-model".into(),
            response: "cached".into(),
            timestamp: 0,
        })
        .unwrap();
    let client = LlmClient::new(config("http://127.0.0.1:9/none", "FETA_TEST_UNSET_KEY_VAR"), dir.path());
    assert_eq!(client.complete("p").unwrap(), "cached");
    assert_eq!(client.network_calls(), 0);
}

#[test]
fn unauthorized_is_not_retried() {
    for code in [401, 403] {
        let server = MockServer::start(vec![Reply::status(code, "denied")]);
        let dir = tempfile::tempdir().unwrap();
        let client = LlmClient::new(config(&server.url, KEY_VAR), dir.path());
        assert!(matches!(client.complete("p"), Err(FetaError::AuthFailure(_))));
        assert_eq!(server.hits(), 1);
    }
}

#[test]
fn malformed_payload_is_reported() {
    let server = MockServer::start(vec![Reply::status(200, r#"{"choices": []}"#)]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::new(config(&server.url, KEY_VAR), dir.path());
    assert!(matches!(client.complete("p"), Err(FetaError::MalformedApiResponse(_))));

    let server = MockServer::start(vec![Reply::status(200, "not json")]);
    let client = LlmClient::new(config(&server.url, KEY_VAR), dir.path());
    assert!(matches!(client.complete("q"), Err(FetaError::MalformedApiResponse(_))));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&format!("http://127.0.0.1:{port}/x"), KEY_VAR);
    cfg.max_retries = 1;
    let client = LlmClient::new(cfg, dir.path());
    assert!(matches!(
        client.complete("p"),
        Err(FetaError::Transport(_) | FetaError::Timeout(_))
    ));
    assert_eq!(client.network_calls(), 2);
}
