//! Minimal blocking JSON-over-HTTP client shared by the remote adapters.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone)]
pub(crate) struct JsonClient {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl JsonClient {
    pub(crate) fn new(endpoint: &str, timeout: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| format!("cannot build http client: {e}"))?;
        Ok(Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            client,
        })
    }

    pub(crate) fn post<Req, Resp>(&self, body: &Req) -> Result<Resp, String>
    where
        Req: Serialize + ?Sized,
        Resp: DeserializeOwned,
    {
        self.post_to(&self.endpoint, body)
    }

    pub(crate) fn post_path<Req, Resp>(&self, path: &str, body: &Req) -> Result<Resp, String>
    where
        Req: Serialize + ?Sized,
        Resp: DeserializeOwned,
    {
        self.post_to(&format!("{}/{}", self.endpoint, path.trim_start_matches('/')), body)
    }

    fn post_to<Req, Resp>(&self, url: &str, body: &Req) -> Result<Resp, String>
    where
        Req: Serialize + ?Sized,
        Resp: DeserializeOwned,
    {
        let response = self
            .client
            .post(url)
            .json(body)
            .send()
            .map_err(|e| format!("request to {url} failed: {e}"))?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("{url} returned status {status}"));
        }
        let bytes = response
            .bytes()
            .map_err(|e| format!("reading response from {url}: {e}"))?;
        serde_json::from_slice(&bytes).map_err(|e| format!("malformed response from {url}: {e}"))
    }
}
