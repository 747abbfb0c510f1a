use std::time::Duration;

use rulediff_core::sim::{Message, RuleResult, ServiceError, ServiceResponse, ValidationService};
use ureq::Agent;

use crate::server::VALIDATION_PATH;

/// Blocking client for a validation service speaking the simulator's protocol.
#[derive(Debug, Clone)]
pub struct ServiceClient {
    agent: Agent,
    endpoint: String,
}

impl ServiceClient {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(30))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        let agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        ServiceClient { agent, endpoint: format!("{}{VALIDATION_PATH}", base_url.trim_end_matches('/')) }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl ValidationService for ServiceClient {
    fn validate(&self, message: &Message) -> Result<ServiceResponse, ServiceError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(message)
            .map_err(|e| ServiceError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| ServiceError::Transport(e.to_string()))?;
        match status {
            200 if body.trim().is_empty() => Ok(ServiceResponse::EmptyResponse),
            200 => serde_json::from_str::<Vec<RuleResult>>(&body)
                .map(ServiceResponse::Results)
                .map_err(|e| ServiceError::Rejected(format!("unreadable result list: {e}"))),
            500 => Ok(ServiceResponse::Http500),
            s @ 400..=499 => Err(ServiceError::Rejected(format!("HTTP {s}: {body}"))),
            s => Err(ServiceError::Transport(format!("HTTP {s}"))),
        }
    }
}
