use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use sese_core::providers::{
    build_entailment_matrix, EntailmentProvider, EntailmentRequest, ProviderError, WireProvider, NLI_URL_ENV,
};

type Handler = dyn Fn(usize, &str, &Value) -> (u16, String) + Send + Sync;

struct Server {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Value>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<(String, Vec<u8>)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    let path = request_line.split_whitespace().nth(1)?.to_string();
    let mut length = 0;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some((path, body))
}

fn serve(handler: Box<Handler>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let handler: Arc<Handler> = Arc::from(handler);
    let (h, b) = (hits.clone(), bodies.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let (h, b, handler) = (h.clone(), b.clone(), handler.clone());
            thread::spawn(move || {
                let Some((path, body)) = read_request(&mut stream) else { return };
                let n = h.fetch_add(1, Ordering::SeqCst);
                let value: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                b.lock().unwrap().push(value.clone());
                let (status, reply) = handler(n, &path, &value);
                let head = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    reply.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(reply.as_bytes());
            });
        }
    });
    Server { url, hits, bodies }
}

/// Deterministic reply: p_e grows with the premise length.
fn nli_reply(path: &str, body: &Value) -> (u16, String) {
    if path != "/nli" {
        return (404, json!({"error": format!("no route {path}")}).to_string());
    }
    let probs: Vec<[f64; 3]> = body["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            let len = p["premise"].as_str().unwrap().len() as f64;
            let pe = len / (len + 10.0);
            [pe, (1.0 - pe) / 2.0, (1.0 - pe) / 2.0]
        })
        .collect();
    (200, json!({ "probs": probs }).to_string())
}

fn provider(url: &str, retries: u32) -> WireProvider {
    WireProvider::with_base_url(url, Duration::from_secs(5), retries, 2).unwrap()
}

fn texts(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn round_trip_in_request_order() {
    let server = serve(Box::new(|_, path, body| nli_reply(path, body)));
    let wire = provider(&server.url, 0).with_batch_size(2);
    let t = texts(&["a", "bb", "ccc"]);
    let em = build_entailment_matrix(&wire, "Q:", &t).unwrap();
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
    // premise for row i is "Q: " + texts[i]
    for i in 0..3 {
        let len = 3.0 + t[i].len() as f64;
        for j in 0..3 {
            if i != j {
                assert_eq!(em.get(i, j)[0], len / (len + 10.0));
            }
        }
    }
    let bodies = server.bodies.lock().unwrap();
    let mut pairs: Vec<(String, String)> = bodies
        .iter()
        .flat_map(|b| b["pairs"].as_array().unwrap().clone())
        .map(|p| (p["premise"].as_str().unwrap().to_string(), p["hypothesis"].as_str().unwrap().to_string()))
        .collect();
    pairs.sort();
    assert_eq!(pairs[0], ("Q: a".to_string(), "Q: bb".to_string()));
    assert_eq!(pairs.len(), 6);
}

#[test]
fn error_status_is_not_retried() {
    let server = serve(Box::new(|_, _, _| (400, json!({"error": "pairs missing"}).to_string())));
    let wire = provider(&server.url, 3);
    let req = EntailmentRequest::all_pairs("", texts(&["a", "b"]));
    match wire.fetch(&req) {
        Err(ProviderError::Status { status: 400, message }) => assert_eq!(message, "pairs missing"),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn server_errors_are_retried() {
    let server = serve(Box::new(|n, path, body| {
        if n == 0 {
            (503, json!({"error": "warming up"}).to_string())
        } else {
            nli_reply(path, body)
        }
    }));
    let wire = provider(&server.url, 2);
    let out = wire.fetch(&EntailmentRequest::all_pairs("", texts(&["a", "b"]))).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn retries_are_bounded() {
    let server = serve(Box::new(|_, _, _| (500, "oops".to_string())));
    let wire = provider(&server.url, 2);
    match wire.fetch(&EntailmentRequest::all_pairs("", texts(&["a", "b"]))) {
        Err(ProviderError::Transport { attempts: 3, message }) => assert!(message.contains("500")),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn malformed_reply_keeps_excerpt() {
    let server = serve(Box::new(|_, _, _| (200, "{\"probabilities\": []}".to_string())));
    let wire = provider(&server.url, 0);
    match wire.fetch(&EntailmentRequest::all_pairs("", texts(&["a", "b"]))) {
        Err(ProviderError::Malformed { excerpt, .. }) => assert!(excerpt.contains("probabilities")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn non_simplex_reply_is_rejected() {
    let server = serve(Box::new(|_, _, _| (200, json!({"probs": [[0.5, 0.5, 0.1], [1, 0, 0]]}).to_string())));
    let wire = provider(&server.url, 0);
    let err = wire.fetch(&EntailmentRequest::all_pairs("", texts(&["a", "b"]))).unwrap_err();
    assert!(matches!(err, ProviderError::Malformed { .. }), "{err}");
}

#[test]
fn unreachable_service_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let wire = provider(&format!("http://127.0.0.1:{port}"), 1);
    let err = wire.fetch(&EntailmentRequest::all_pairs("", texts(&["a", "b"]))).unwrap_err();
    assert!(matches!(err, ProviderError::Transport { attempts: 2, .. }), "{err}");
}

#[test]
fn environment_overrides_endpoint() {
    let server = serve(Box::new(|_, path, body| nli_reply(path, body)));
    std::env::set_var(NLI_URL_ENV, &server.url);
    let wire = WireProvider::new("http://127.0.0.1:9", Duration::from_secs(5), 0, 8).unwrap();
    std::env::remove_var(NLI_URL_ENV);
    assert_eq!(wire.url(), format!("{}/nli", server.url));
    assert_eq!(wire.fetch(&EntailmentRequest::all_pairs("", texts(&["a", "b"]))).unwrap().len(), 2);
}
