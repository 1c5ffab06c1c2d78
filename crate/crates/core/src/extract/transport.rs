use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::de::DeserializeOwned;
use url::Url;

use super::ExtractError;

/// Credentials attached to a request.
#[derive(Clone, Default, PartialEq, Eq)]
pub enum Auth {
    #[default]
    None,
    /// GitLab `PRIVATE-TOKEN` header.
    PrivateToken(String),
    /// HTTP basic auth from a `user:token` string (Jenkins API tokens).
    Basic(String),
}

impl std::fmt::Debug for Auth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self {
            Auth::None => "None",
            Auth::PrivateToken(_) => "PrivateToken(..)",
            Auth::Basic(_) => "Basic(..)",
        };
        f.write_str(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: Vec<u8>,
}

/// The boundary between extractors and the network. Live and recorded
/// implementations answer the same requests.
pub trait Transport: Send + Sync {
    fn get(&self, url: &Url, auth: &Auth) -> Result<Response, ExtractError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &Url, auth: &Auth) -> Result<Response, ExtractError> {
        let mut req = self.agent.get(url.as_str()).header("Accept", "application/json");
        match auth {
            Auth::None => {}
            Auth::PrivateToken(t) => req = req.header("PRIVATE-TOKEN", t),
            Auth::Basic(userpass) => {
                let encoded = base64::engine::general_purpose::STANDARD.encode(userpass);
                req = req.header("Authorization", format!("Basic {encoded}"));
            }
        }
        let unreachable = |e: ureq::Error| ExtractError::Unreachable { endpoint: redact(url), message: e.to_string() };
        let mut resp = req.call().map_err(unreachable)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().with_config().limit(64 << 20).read_to_vec().map_err(unreachable)?;
        Ok(Response { status, body })
    }
}

const FIXTURE_SET: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.');

/// File name under which the response to `url` is recorded: the
/// percent-encoded path and query. Scheme and host are ignored.
pub fn fixture_key(url: &Url) -> String {
    let mut target = url.path().to_string();
    if let Some(q) = url.query() {
        target.push('?');
        target.push_str(q);
    }
    format!("{}.json", utf8_percent_encode(&target, FIXTURE_SET))
}

/// Serves recorded responses from a directory. Missing recordings answer 404.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    dir: PathBuf,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, url: &Url) -> PathBuf {
        self.dir.join(fixture_key(url))
    }
}

impl Transport for FixtureTransport {
    fn get(&self, url: &Url, _auth: &Auth) -> Result<Response, ExtractError> {
        match std::fs::read(self.path_for(url)) {
            Ok(body) => Ok(Response { status: 200, body }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Response { status: 404, body: Vec::new() }),
            Err(e) => Err(ExtractError::Unreachable { endpoint: redact(url), message: e.to_string() }),
        }
    }
}

/// Backoff for HTTP 429.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 5, base_delay: Duration::from_millis(250), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16)).min(self.max_delay)
    }
}

/// URL without credentials, for error messages.
pub(crate) fn redact(url: &Url) -> String {
    let mut u = url.clone();
    let _ = u.set_password(None);
    let _ = u.set_username("");
    u.to_string()
}

/// Performs requests for one source: auth, retries, status mapping and JSON decoding.
pub struct Fetcher<'a> {
    pub transport: &'a dyn Transport,
    pub retry: RetryPolicy,
    pub auth: Auth,
    /// names the source in auth errors
    pub project: String,
}

impl Fetcher<'_> {
    pub fn get_bytes(&self, url: &Url) -> Result<Vec<u8>, ExtractError> {
        let mut attempt = 0;
        loop {
            let resp = self.transport.get(url, &self.auth)?;
            match resp.status {
                200..=299 => return Ok(resp.body),
                401 | 403 => {
                    return Err(ExtractError::Auth { project: self.project.clone(), status: resp.status })
                }
                429 if attempt < self.retry.max_retries => {
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                429 => return Err(ExtractError::RateLimited { endpoint: redact(url), attempts: attempt + 1 }),
                status => return Err(ExtractError::Http { endpoint: redact(url), status }),
            }
        }
    }

    /// Decode one response; `page` is reported as the offset on failure.
    pub fn get_json<T: DeserializeOwned>(&self, url: &Url, page: u32) -> Result<T, ExtractError> {
        let body = self.get_bytes(url)?;
        serde_json::from_slice(&body).map_err(|e| ExtractError::Parse {
            endpoint: redact(url),
            page,
            message: e.to_string(),
        })
    }
}
