//! Integration tests for the remote scorer against a minimal in-process
//! HTTP stub, covering the happy path and every protocol violation class.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use substisift_core::classifier::Scorer;
use substisift_core::error::Error;
use substisift_core::remote::RemoteScorer;
use substisift_core::text::tokenize;

/// One observed request: method, path, body.
type Seen = Arc<Mutex<Vec<(String, String, String)>>>;

/// Spawns a tiny HTTP/1.1 server; the router maps (method, path, body) to
/// (status, JSON body). Connections are closed after each response, and the
/// acceptor thread lives until the test process exits.
fn spawn_server(
    router: impl Fn(&str, &str, &str) -> (u16, String) + Send + 'static,
) -> (String, Seen) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let seen: Seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);

    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(match stream.try_clone() {
                Ok(s) => s,
                Err(_) => continue,
            });

            let mut request_line = String::new();
            if reader.read_line(&mut request_line).is_err() || request_line.trim().is_empty() {
                continue;
            }
            let mut parts = request_line.split_whitespace();
            let method = parts.next().unwrap_or_default().to_string();
            let path = parts.next().unwrap_or_default().to_string();

            let mut content_length = 0usize;
            loop {
                let mut header = String::new();
                if reader.read_line(&mut header).is_err() {
                    break;
                }
                let header = header.trim_end().to_ascii_lowercase();
                if header.is_empty() {
                    break;
                }
                if let Some(v) = header.strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0u8; content_length];
            if content_length > 0 && reader.read_exact(&mut body).is_err() {
                continue;
            }
            let body = String::from_utf8_lossy(&body).into_owned();

            let (status, response) = router(&method, &path, &body);
            log.lock().unwrap().push((method, path, body));

            let reason = match status {
                200 => "OK",
                404 => "Not Found",
                422 => "Unprocessable Entity",
                500 => "Internal Server Error",
                503 => "Service Unavailable",
                _ => "Other",
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\n\
                 content-length: {}\r\nconnection: close\r\n\r\n{response}",
                response.len()
            );
        }
    });
    (base, seen)
}

fn meta_body(num_classes: usize) -> String {
    format!("{{\"num_classes\":{num_classes}}}")
}

#[test]
fn connects_and_scores_batches() {
    let (base, seen) = spawn_server(|method, path, body| match (method, path) {
        ("GET", "/v1/meta") => {
            (200, r#"{"num_classes":2,"reserved_tokens":["[cls]","[sep]"]}"#.to_string())
        }
        ("POST", "/v1/score") => {
            let texts = body.matches("\",").count() + usize::from(body.contains('"'));
            // One fixed row per requested text.
            let rows = vec!["[0.25,0.75]"; texts].join(",");
            (200, format!("{{\"scores\":[{rows}]}}"))
        }
        _ => (404, "{}".to_string()),
    });

    // Trailing slash is trimmed before paths are joined.
    let scorer = RemoteScorer::connect(&format!("{base}/")).unwrap();
    assert_eq!(scorer.num_classes(), 2);
    assert_eq!(scorer.base_url(), base);
    let reserved: Vec<&str> = scorer.reserved_tokens().iter().map(|t| t.as_str()).collect();
    assert_eq!(reserved, ["[cls]", "[sep]"]);

    let batch = vec![tokenize("a fine film ."), tokenize("awful mess !")];
    let scores = scorer.score_batch(&batch).unwrap();
    assert_eq!(scores.len(), 2);
    assert_eq!(scores[0].probs(), &[0.25, 0.75]);
    assert_eq!(scorer.predict(&batch[0]).unwrap(), 1);

    let log = seen.lock().unwrap();
    assert_eq!(log[0].1, "/v1/meta");
    let (_, path, body) = &log[1];
    assert_eq!(path, "/v1/score");
    assert!(body.contains("a fine film ."), "detokenized text sent: {body}");
    assert!(body.contains("awful mess !"), "{body}");
}

#[test]
fn empty_batch_sends_no_request() {
    let (base, seen) =
        spawn_server(|_, path, _| match path {
            "/v1/meta" => (200, meta_body(2)),
            _ => (500, "{}".to_string()),
        });
    let scorer = RemoteScorer::connect(&base).unwrap();
    assert_eq!(scorer.score_batch(&[]).unwrap().len(), 0);
    assert_eq!(seen.lock().unwrap().len(), 1, "only the meta request goes out");
}

#[test]
fn protocol_violations_are_not_retriable() {
    // Row count mismatch.
    let (base, _) = spawn_server(|_, path, _| match path {
        "/v1/meta" => (200, meta_body(2)),
        _ => (200, r#"{"scores":[]}"#.to_string()),
    });
    let scorer = RemoteScorer::connect(&base).unwrap();
    let err = scorer.score(&tokenize("hello there")).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    assert!(!err.is_retriable());

    // Wrong row width.
    let (base, _) = spawn_server(|_, path, _| match path {
        "/v1/meta" => (200, meta_body(2)),
        _ => (200, r#"{"scores":[[1.0]]}"#.to_string()),
    });
    let err = RemoteScorer::connect(&base).unwrap().score(&tokenize("x y")).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");

    // A row that is not a probability distribution.
    let (base, _) = spawn_server(|_, path, _| match path {
        "/v1/meta" => (200, meta_body(2)),
        _ => (200, r#"{"scores":[[0.9,0.9]]}"#.to_string()),
    });
    let err = RemoteScorer::connect(&base).unwrap().score(&tokenize("x y")).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");

    // Unparseable body.
    let (base, _) = spawn_server(|_, path, _| match path {
        "/v1/meta" => (200, meta_body(2)),
        _ => (200, "not json".to_string()),
    });
    let err = RemoteScorer::connect(&base).unwrap().score(&tokenize("x y")).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn client_errors_are_protocol_server_errors_are_transport() {
    let (base, _) = spawn_server(|_, path, _| match path {
        "/v1/meta" => (200, meta_body(2)),
        _ => (422, "{}".to_string()),
    });
    let err = RemoteScorer::connect(&base).unwrap().score(&tokenize("x")).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    assert!(!err.is_retriable());

    let (base, _) = spawn_server(|_, path, _| match path {
        "/v1/meta" => (200, meta_body(2)),
        _ => (503, "{}".to_string()),
    });
    let err = RemoteScorer::connect(&base).unwrap().score(&tokenize("x")).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
    assert!(err.is_retriable());
}

#[test]
fn bad_metadata_is_rejected_at_connect() {
    let (base, _) = spawn_server(|_, _, _| (200, meta_body(1)));
    let err = RemoteScorer::connect(&base).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");

    let (base, _) =
        spawn_server(|_, _, _| (200, r#"{"num_classes":2,"reserved_tokens":[" "]}"#.to_string()));
    let err = RemoteScorer::connect(&base).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn unreachable_server_is_transport() {
    // Bind a port, then drop the listener so the address refuses connections.
    let addr = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap()
    };
    let err =
        RemoteScorer::connect_with_timeout(&format!("http://{addr}"), Duration::from_secs(2))
            .unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
    assert!(err.is_retriable());
}
