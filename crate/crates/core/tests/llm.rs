use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use kmse::llm::{CallContext, ChatClient, ChatMessage, ChatParams, LlmError, OpenAiClient, OpenAiConfig, TemplateId};

/// Serves one scripted (status, body) per connection and records request bodies.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    std::thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(String::from_utf8(buf).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}"), seen)
}

fn client(endpoint: String) -> OpenAiClient {
    let mut cfg = OpenAiConfig::from_env(endpoint);
    cfg.api_key = Some("test-key".into());
    cfg.backoff = Duration::from_millis(5);
    cfg.timeout = Duration::from_secs(10);
    OpenAiClient::new(cfg).unwrap()
}

const OK: &str = r#"{"model":"m1","choices":[{"message":{"role":"assistant","content":"OK"}}],"usage":{"prompt_tokens":7,"completion_tokens":1}}"#;

fn call(c: &OpenAiClient) -> Result<kmse::llm::ChatResponse, LlmError> {
    c.chat(&[ChatMessage::user("hello")], &ChatParams::default(), CallContext { template: TemplateId::Init })
}

#[test]
fn retries_rate_limits_then_succeeds() {
    let busy = r#"{"error":"slow down"}"#.to_string();
    let (url, seen) = serve(vec![(429, busy.clone()), (429, busy), (200, OK.into())]);
    let r = call(&client(url)).unwrap();
    assert_eq!(r.text, "OK");
    assert_eq!(r.retries, 2);
    assert_eq!((r.prompt_tokens, r.completion_tokens), (Some(7), Some(1)));
    let bodies = seen.lock().unwrap();
    assert_eq!(bodies.len(), 3);
    let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(sent["temperature"], 0.0);
    assert_eq!(sent["messages"][0]["content"], "hello");
}

#[test]
fn gives_up_after_three_retries() {
    let busy = r#"{}"#.to_string();
    let (url, _) = serve(vec![(429, busy.clone()); 4]);
    assert_eq!(call(&client(url)), Err(LlmError::RateLimited { attempts: 4 }));
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, seen) = serve(vec![(401, "{}".into())]);
    assert!(matches!(call(&client(url)), Err(LlmError::AuthError(_))));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_are_retried() {
    let (url, _) = serve(vec![(503, "{}".into()), (200, OK.into())]);
    assert_eq!(call(&client(url)).unwrap().retries, 1);
}

#[test]
fn malformed_body_is_reported() {
    let (url, _) = serve(vec![(200, "not json".into())]);
    assert!(matches!(call(&client(url)), Err(LlmError::MalformedResponse(_))));
}
