//! Shared HTTP plumbing for the remote backend clients.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("{0}")]
    Unavailable(String),
    #[error("{0}")]
    RateLimited(String, Option<Duration>),
    #[error("{0}")]
    InvalidResponse(String),
}

pub(crate) fn client(timeout: Duration) -> Result<reqwest::Client, TransportError> {
    reqwest::Client::builder()
        .timeout(timeout)
        .connect_timeout(timeout)
        .build()
        .map_err(|e| TransportError::Unavailable(format!("building http client: {e}")))
}

pub(crate) fn trim_endpoint(mut endpoint: String) -> String {
    while endpoint.ends_with('/') {
        endpoint.pop();
    }
    endpoint
}

pub(crate) async fn post_json<Req, Resp>(
    client: &reqwest::Client,
    url: &str,
    body: &Req,
    bearer: Option<&str>,
) -> Result<Resp, TransportError>
where
    Req: Serialize + ?Sized,
    Resp: DeserializeOwned,
{
    let mut req = client.post(url).json(body);
    if let Some(token) = bearer {
        req = req.bearer_auth(token);
    }
    let resp = req
        .send()
        .await
        .map_err(|e| TransportError::Unavailable(format!("POST {url}: {e}")))?;
    let status = resp.status();
    if status == reqwest::StatusCode::TOO_MANY_REQUESTS {
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        return Err(TransportError::RateLimited(format!("POST {url}: 429"), retry_after));
    }
    if status.is_server_error() {
        return Err(TransportError::Unavailable(format!("POST {url}: {status}")));
    }
    if !status.is_success() {
        return Err(TransportError::InvalidResponse(format!("POST {url}: {status}")));
    }
    let bytes = resp
        .bytes()
        .await
        .map_err(|e| TransportError::Unavailable(format!("reading body of {url}: {e}")))?;
    serde_json::from_slice(&bytes).map_err(|e| TransportError::InvalidResponse(format!("{url}: {e}")))
}

/// Any HTTP answer to a HEAD on the endpoint root counts as reachable.
pub(crate) async fn ping(client: &reqwest::Client, endpoint: &str) -> bool {
    client.head(format!("{endpoint}/")).send().await.is_ok()
}
