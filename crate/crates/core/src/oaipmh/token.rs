//! Stateless resumption tokens.
//!
//! A token is self-describing: it embeds the full query (metadataPrefix,
//! from, until, set), the page offset, and issue/expiry instants, sealed
//! with an MD5 MAC keyed by a per-node secret. No server-side token
//! state exists, so tokens survive restarts; any mutation of the text
//! fails integrity decoding. Text form: `base64url(payload).mac16`, all
//! URL-safe characters.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;

use crate::clock::Datestamp;
use crate::store::md5_hex;
use crate::wire::{encode_query, parse_query};

/// Tokens expire one hour after issue.
pub const TOKEN_TTL_SECS: i64 = 3600;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("token is malformed")]
    Malformed,
    #[error("token failed integrity check")]
    BadSignature,
    #[error("token expired")]
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenPayload {
    pub metadata_prefix: String,
    pub from: Option<Datestamp>,
    pub until: Option<Datestamp>,
    pub set: Option<String>,
    pub offset: usize,
    pub issued_at: i64,
    pub expires_at: i64,
}

impl TokenPayload {
    pub fn new(
        metadata_prefix: &str,
        from: Option<Datestamp>,
        until: Option<Datestamp>,
        set: Option<&str>,
        offset: usize,
        issued_at: Datestamp,
    ) -> TokenPayload {
        TokenPayload {
            metadata_prefix: metadata_prefix.to_string(),
            from,
            until,
            set: set.map(str::to_string),
            offset,
            issued_at: issued_at.unix_seconds(),
            expires_at: issued_at.unix_seconds() + TOKEN_TTL_SECS,
        }
    }

    /// Hash binding the token to its query, kept inside the payload.
    pub fn query_hash(&self) -> String {
        let canonical = format!(
            "p={}&f={}&u={}&s={}",
            self.metadata_prefix,
            self.from.map(|d| d.to_string()).unwrap_or_default(),
            self.until.map(|d| d.to_string()).unwrap_or_default(),
            self.set.clone().unwrap_or_default(),
        );
        md5_hex(canonical.as_bytes())[..8].to_string()
    }

    pub fn encode(&self, secret: &str) -> String {
        let mut pairs: Vec<(String, String)> = vec![
            ("p".into(), self.metadata_prefix.clone()),
            ("c".into(), self.offset.to_string()),
            ("i".into(), self.issued_at.to_string()),
            ("e".into(), self.expires_at.to_string()),
            ("qh".into(), self.query_hash()),
        ];
        if let Some(f) = self.from {
            pairs.push(("f".into(), f.to_string()));
        }
        if let Some(u) = self.until {
            pairs.push(("u".into(), u.to_string()));
        }
        if let Some(s) = &self.set {
            pairs.push(("s".into(), s.clone()));
        }
        let payload = URL_SAFE_NO_PAD.encode(encode_query(&pairs));
        let mac = mac16(&payload, secret);
        format!("{payload}.{mac}")
    }

    pub fn decode(token: &str, secret: &str, now: Datestamp) -> Result<TokenPayload, TokenError> {
        let (payload, mac) = token.rsplit_once('.').ok_or(TokenError::Malformed)?;
        if mac16(payload, secret) != mac {
            return Err(TokenError::BadSignature);
        }
        let raw = URL_SAFE_NO_PAD
            .decode(payload)
            .map_err(|_| TokenError::Malformed)?;
        let raw = String::from_utf8(raw).map_err(|_| TokenError::Malformed)?;
        let mut metadata_prefix = None;
        let mut from = None;
        let mut until = None;
        let mut set = None;
        let mut offset = None;
        let mut issued_at = None;
        let mut expires_at = None;
        let mut query_hash = None;
        for (k, v) in parse_query(&raw) {
            match k.as_str() {
                "p" => metadata_prefix = Some(v),
                "f" => from = Some(v.parse().map_err(|_| TokenError::Malformed)?),
                "u" => until = Some(v.parse().map_err(|_| TokenError::Malformed)?),
                "s" => set = Some(v),
                "c" => offset = Some(v.parse().map_err(|_| TokenError::Malformed)?),
                "i" => issued_at = Some(v.parse().map_err(|_| TokenError::Malformed)?),
                "e" => expires_at = Some(v.parse().map_err(|_| TokenError::Malformed)?),
                "qh" => query_hash = Some(v),
                _ => return Err(TokenError::Malformed),
            }
        }
        let decoded = TokenPayload {
            metadata_prefix: metadata_prefix.ok_or(TokenError::Malformed)?,
            from,
            until,
            set,
            offset: offset.ok_or(TokenError::Malformed)?,
            issued_at: issued_at.ok_or(TokenError::Malformed)?,
            expires_at: expires_at.ok_or(TokenError::Malformed)?,
        };
        if query_hash.as_deref() != Some(decoded.query_hash().as_str()) {
            return Err(TokenError::BadSignature);
        }
        if now.unix_seconds() > decoded.expires_at {
            return Err(TokenError::Expired);
        }
        Ok(decoded)
    }
}

fn mac16(payload: &str, secret: &str) -> String {
    md5_hex(format!("{payload}\u{0}{secret}").as_bytes())[..16].to_string()
}
