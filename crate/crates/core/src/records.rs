//! Forensic record model: safety messages, event-recorder captures,
//! diagnosis reports, and dual-signed maintenance records, plus the signed
//! envelope that binds a record to a pseudonym and a submission time.
//!
//! Physical quantities are stored as fixed-point integers (mm, mm/s,
//! centidegrees) so canonical encodings, and therefore digests, are
//! bit-exact across platforms.

use std::collections::BTreeMap;
use thiserror::Error;

use crate::crypto::{
    self, Digest, KeyPair, PseudonymCertificate, PseudonymId, PublicKey, Signature,
};
use crate::encoding::{
    Canon, CodecError, Decoder, Encoder, TAG_BSM, TAG_DIAGNOSIS, TAG_EDR, TAG_MAINTENANCE,
    TAG_MAINTENANCE_PAYLOAD, TAG_SIGNED_RECORD, TAG_SIGNED_RECORD_PAYLOAD,
};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("submit time {submit_time} outside certificate window [{from}, {until})")]
    OutsideWindow {
        submit_time: u64,
        from: u64,
        until: u64,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Compass direction of travel through the intersection; keys of the
/// traffic-light state map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Approach {
    North,
    East,
    South,
    West,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::North, Approach::East, Approach::South, Approach::West];

    pub fn as_str(&self) -> &'static str {
        match self {
            Approach::North => "north",
            Approach::East => "east",
            Approach::South => "south",
            Approach::West => "west",
        }
    }

    pub fn from_str(s: &str) -> Option<Approach> {
        match s {
            "north" => Some(Approach::North),
            "east" => Some(Approach::East),
            "south" => Some(Approach::South),
            "west" => Some(Approach::West),
            _ => None,
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            Approach::North => 0,
            Approach::East => 1,
            Approach::South => 2,
            Approach::West => 3,
        }
    }

    fn from_byte(b: u8) -> Result<Approach, CodecError> {
        match b {
            0 => Ok(Approach::North),
            1 => Ok(Approach::East),
            2 => Ok(Approach::South),
            3 => Ok(Approach::West),
            _ => Err(CodecError::UnknownDiscriminant(b)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum LightColor {
    Red,
    Yellow,
    Green,
}

impl LightColor {
    pub fn as_str(&self) -> &'static str {
        match self {
            LightColor::Red => "red",
            LightColor::Yellow => "yellow",
            LightColor::Green => "green",
        }
    }

    pub fn from_str(s: &str) -> Option<LightColor> {
        match s {
            "red" => Some(LightColor::Red),
            "yellow" => Some(LightColor::Yellow),
            "green" => Some(LightColor::Green),
            _ => None,
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            LightColor::Red => 0,
            LightColor::Yellow => 1,
            LightColor::Green => 2,
        }
    }

    fn from_byte(b: u8) -> Result<LightColor, CodecError> {
        match b {
            0 => Ok(LightColor::Red),
            1 => Ok(LightColor::Yellow),
            2 => Ok(LightColor::Green),
            _ => Err(CodecError::UnknownDiscriminant(b)),
        }
    }
}

/// Basic safety message: the periodic position/speed broadcast. Infrastructure
/// senders (traffic lights) additionally carry the light state per approach
/// and are stationary by definition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BsmMessage {
    pub sender: PseudonymId,
    pub timestamp: u64,
    /// Scene-frame position in millimetres.
    pub position_mm: (i64, i64),
    pub speed_mm_s: u64,
    /// Heading in centidegrees, `[0, 36000)`.
    pub heading_cdeg: u32,
    /// Vehicle length and width in millimetres, both positive.
    pub size_mm: (u32, u32),
    pub brake_on: bool,
    pub positional_accuracy_mm: u32,
    /// Steering wheel angle in centidegrees, `[-72000, 72000]`.
    pub steering_cdeg: i32,
    pub traffic_light: Option<BTreeMap<Approach, LightColor>>,
}

impl BsmMessage {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.heading_cdeg >= 36_000 {
            return Err(CodecError::Invariant("heading must be below 360 degrees"));
        }
        if self.size_mm.0 == 0 || self.size_mm.1 == 0 {
            return Err(CodecError::Invariant("vehicle size must be positive"));
        }
        if !(-72_000..=72_000).contains(&self.steering_cdeg) {
            return Err(CodecError::Invariant("steering angle out of range"));
        }
        if self.traffic_light.is_some() && self.speed_mm_s != 0 {
            return Err(CodecError::Invariant("infrastructure senders are stationary"));
        }
        Ok(())
    }
}

impl Canon for BsmMessage {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        self.validate()?;
        enc.put_u8(TAG_BSM);
        enc.put_fixed(&self.sender.0);
        enc.put_u64(self.timestamp);
        enc.put_i64(self.position_mm.0);
        enc.put_i64(self.position_mm.1);
        enc.put_u64(self.speed_mm_s);
        enc.put_u32(self.heading_cdeg);
        enc.put_u32(self.size_mm.0);
        enc.put_u32(self.size_mm.1);
        enc.put_bool(self.brake_on);
        enc.put_u32(self.positional_accuracy_mm);
        enc.put_i32(self.steering_cdeg);
        match &self.traffic_light {
            None => enc.put_u8(0),
            Some(map) => {
                enc.put_u8(1);
                enc.put_count(map.len());
                for (approach, color) in map {
                    enc.put_u8(approach.to_byte());
                    enc.put_u8(color.to_byte());
                }
            }
        }
        Ok(())
    }

    fn read(dec: &mut Decoder) -> Result<Self, CodecError> {
        dec.expect_tag(TAG_BSM)?;
        let sender = PseudonymId(dec.take_fixed()?);
        let timestamp = dec.take_u64()?;
        let position_mm = (dec.take_i64()?, dec.take_i64()?);
        let speed_mm_s = dec.take_u64()?;
        let heading_cdeg = dec.take_u32()?;
        let size_mm = (dec.take_u32()?, dec.take_u32()?);
        let brake_on = dec.take_bool()?;
        let positional_accuracy_mm = dec.take_u32()?;
        let steering_cdeg = dec.take_i32()?;
        let traffic_light = match dec.take_u8()? {
            0 => None,
            1 => {
                let n = dec.take_count()?;
                let mut map = BTreeMap::new();
                let mut last: Option<u8> = None;
                for _ in 0..n {
                    let key = dec.take_u8()?;
                    if last.is_some_and(|prev| key <= prev) {
                        return Err(CodecError::UnsortedMap);
                    }
                    last = Some(key);
                    map.insert(Approach::from_byte(key)?, LightColor::from_byte(dec.take_u8()?)?);
                }
                Some(map)
            }
            b => return Err(CodecError::InvalidPresence(b)),
        };
        let bsm = BsmMessage {
            sender,
            timestamp,
            position_mm,
            speed_mm_s,
            heading_cdeg,
            size_mm,
            brake_on,
            positional_accuracy_mm,
            steering_cdeg,
            traffic_light,
        };
        bsm.validate()?;
        Ok(bsm)
    }
}

/// One pre-event state capture inside an EDR event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VehicleSample {
    pub timestamp: u64,
    pub position_mm: (i64, i64),
    pub speed_mm_s: u64,
    pub brake_on: bool,
    pub steering_cdeg: i32,
    pub autopilot_engaged: bool,
}

impl VehicleSample {
    fn write_inline(&self, enc: &mut Encoder) {
        enc.put_u64(self.timestamp);
        enc.put_i64(self.position_mm.0);
        enc.put_i64(self.position_mm.1);
        enc.put_u64(self.speed_mm_s);
        enc.put_bool(self.brake_on);
        enc.put_i32(self.steering_cdeg);
        enc.put_bool(self.autopilot_engaged);
    }

    fn read_inline(dec: &mut Decoder) -> Result<VehicleSample, CodecError> {
        Ok(VehicleSample {
            timestamp: dec.take_u64()?,
            position_mm: (dec.take_i64()?, dec.take_i64()?),
            speed_mm_s: dec.take_u64()?,
            brake_on: dec.take_bool()?,
            steering_cdeg: dec.take_i32()?,
            autopilot_engaged: dec.take_bool()?,
        })
    }
}

/// What made the event recorder capture state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdrTrigger {
    AirbagDeployment,
    /// Speed changed by more than the threshold between consecutive samples.
    SpeedDelta { threshold_mm_s: u64 },
}

/// Event-recorder capture: pre-event vehicle state plus the safety messages
/// heard around the event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdrEvent {
    pub trigger: EdrTrigger,
    pub event_time: u64,
    pub pre_event_samples: Vec<VehicleSample>,
    pub related_bsms: Vec<BsmMessage>,
}

impl EdrEvent {
    pub fn validate(&self) -> Result<(), CodecError> {
        if let EdrTrigger::SpeedDelta { threshold_mm_s: 0 } = self.trigger {
            return Err(CodecError::Invariant("speed delta threshold must be positive"));
        }
        let mut last: Option<u64> = None;
        for sample in &self.pre_event_samples {
            if last.is_some_and(|prev| sample.timestamp <= prev) {
                return Err(CodecError::Invariant("pre-event samples must strictly increase in time"));
            }
            if sample.timestamp > self.event_time {
                return Err(CodecError::Invariant("pre-event sample after event time"));
            }
            last = Some(sample.timestamp);
        }
        for bsm in &self.related_bsms {
            bsm.validate()?;
            if bsm.timestamp > self.event_time {
                return Err(CodecError::Invariant("related safety message after event time"));
            }
        }
        Ok(())
    }
}

impl Canon for EdrEvent {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        self.validate()?;
        enc.put_u8(TAG_EDR);
        match self.trigger {
            EdrTrigger::AirbagDeployment => enc.put_u8(0),
            EdrTrigger::SpeedDelta { threshold_mm_s } => {
                enc.put_u8(1);
                enc.put_u64(threshold_mm_s);
            }
        }
        enc.put_u64(self.event_time);
        enc.put_count(self.pre_event_samples.len());
        for sample in &self.pre_event_samples {
            sample.write_inline(enc);
        }
        enc.put_count(self.related_bsms.len());
        for bsm in &self.related_bsms {
            bsm.write(enc)?;
        }
        Ok(())
    }

    fn read(dec: &mut Decoder) -> Result<Self, CodecError> {
        dec.expect_tag(TAG_EDR)?;
        let trigger = match dec.take_u8()? {
            0 => EdrTrigger::AirbagDeployment,
            1 => EdrTrigger::SpeedDelta {
                threshold_mm_s: dec.take_u64()?,
            },
            b => return Err(CodecError::UnknownDiscriminant(b)),
        };
        let event_time = dec.take_u64()?;
        let n_samples = dec.take_count()?;
        let mut pre_event_samples = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            pre_event_samples.push(VehicleSample::read_inline(dec)?);
        }
        let n_bsms = dec.take_count()?;
        let mut related_bsms = Vec::with_capacity(n_bsms);
        for _ in 0..n_bsms {
            related_bsms.push(BsmMessage::read(dec)?);
        }
        let edr = EdrEvent {
            trigger,
            event_time,
            pre_event_samples,
            related_bsms,
        };
        edr.validate()?;
        Ok(edr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensorHealth {
    Ok,
    Failed,
}

/// Periodic or failure-driven self-diagnosis snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiagnosisReport {
    pub report_time: u64,
    pub trouble_codes: Vec<String>,
    pub sensor_status: BTreeMap<String, SensorHealth>,
    pub autopilot_engaged: bool,
}

impl Canon for DiagnosisReport {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        enc.put_u8(TAG_DIAGNOSIS);
        enc.put_u64(self.report_time);
        enc.put_count(self.trouble_codes.len());
        for code in &self.trouble_codes {
            enc.put_str(code);
        }
        enc.put_count(self.sensor_status.len());
        for (name, health) in &self.sensor_status {
            enc.put_str(name);
            enc.put_u8(match health {
                SensorHealth::Ok => 0,
                SensorHealth::Failed => 1,
            });
        }
        enc.put_bool(self.autopilot_engaged);
        Ok(())
    }

    fn read(dec: &mut Decoder) -> Result<Self, CodecError> {
        dec.expect_tag(TAG_DIAGNOSIS)?;
        let report_time = dec.take_u64()?;
        let n_codes = dec.take_count()?;
        let mut trouble_codes = Vec::with_capacity(n_codes);
        for _ in 0..n_codes {
            trouble_codes.push(dec.take_str()?);
        }
        let n_sensors = dec.take_count()?;
        let mut sensor_status = BTreeMap::new();
        let mut last: Option<String> = None;
        for _ in 0..n_sensors {
            let name = dec.take_str()?;
            if last.as_ref().is_some_and(|prev| name.as_bytes() <= prev.as_bytes()) {
                return Err(CodecError::UnsortedMap);
            }
            let health = match dec.take_u8()? {
                0 => SensorHealth::Ok,
                1 => SensorHealth::Failed,
                b => return Err(CodecError::UnknownDiscriminant(b)),
            };
            last = Some(name.clone());
            sensor_status.insert(name, health);
        }
        let autopilot_engaged = dec.take_bool()?;
        Ok(DiagnosisReport {
            report_time,
            trouble_codes,
            sensor_status,
            autopilot_engaged,
        })
    }
}

/// Service record signed by both the vehicle (pseudonym key) and the
/// maintenance provider (long-term key).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaintenanceRecord {
    pub service_time: u64,
    pub provider_id: String,
    pub work_items: Vec<String>,
    pub observed_defects: Vec<String>,
    pub vehicle_signature: Signature,
    pub provider_signature: Signature,
}

impl MaintenanceRecord {
    /// Bytes covered by both signatures: everything except the signatures.
    pub fn signing_payload(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(TAG_MAINTENANCE_PAYLOAD);
        enc.put_u64(self.service_time);
        enc.put_str(&self.provider_id);
        enc.put_count(self.work_items.len());
        for item in &self.work_items {
            enc.put_str(item);
        }
        enc.put_count(self.observed_defects.len());
        for defect in &self.observed_defects {
            enc.put_str(defect);
        }
        enc.into_bytes()
    }

    /// Build a record signed by both parties.
    pub fn dual_signed(
        service_time: u64,
        provider_id: &str,
        work_items: Vec<String>,
        observed_defects: Vec<String>,
        vehicle_key: &KeyPair,
        provider_key: &KeyPair,
    ) -> MaintenanceRecord {
        let mut record = MaintenanceRecord {
            service_time,
            provider_id: provider_id.to_string(),
            work_items,
            observed_defects,
            vehicle_signature: Signature::EMPTY,
            provider_signature: Signature::EMPTY,
        };
        let payload = record.signing_payload();
        record.vehicle_signature = vehicle_key.sign(&payload);
        record.provider_signature = provider_key.sign(&payload);
        record
    }
}

impl Canon for MaintenanceRecord {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        enc.put_u8(TAG_MAINTENANCE);
        enc.put_u64(self.service_time);
        enc.put_str(&self.provider_id);
        enc.put_count(self.work_items.len());
        for item in &self.work_items {
            enc.put_str(item);
        }
        enc.put_count(self.observed_defects.len());
        for defect in &self.observed_defects {
            enc.put_str(defect);
        }
        enc.put_fixed(&self.vehicle_signature.0);
        enc.put_fixed(&self.provider_signature.0);
        Ok(())
    }

    fn read(dec: &mut Decoder) -> Result<Self, CodecError> {
        dec.expect_tag(TAG_MAINTENANCE)?;
        let service_time = dec.take_u64()?;
        let provider_id = dec.take_str()?;
        let n_items = dec.take_count()?;
        let mut work_items = Vec::with_capacity(n_items);
        for _ in 0..n_items {
            work_items.push(dec.take_str()?);
        }
        let n_defects = dec.take_count()?;
        let mut observed_defects = Vec::with_capacity(n_defects);
        for _ in 0..n_defects {
            observed_defects.push(dec.take_str()?);
        }
        Ok(MaintenanceRecord {
            service_time,
            provider_id,
            work_items,
            observed_defects,
            vehicle_signature: Signature(dec.take_fixed()?),
            provider_signature: Signature(dec.take_fixed()?),
        })
    }
}

/// Which of the two maintenance signatures verify.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MultisigVerdict {
    Valid,
    VehicleSigBad,
    ProviderSigBad,
    BothBad,
}

impl MultisigVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            MultisigVerdict::Valid => "ok",
            MultisigVerdict::VehicleSigBad => "vehicle_bad",
            MultisigVerdict::ProviderSigBad => "provider_bad",
            MultisigVerdict::BothBad => "both_bad",
        }
    }
}

/// Check both maintenance signatures against the vehicle certificate's
/// subject key and the provider's long-term key.
pub fn verify_maintenance_multisig(
    record: &MaintenanceRecord,
    vehicle_cert: &PseudonymCertificate,
    provider_public: &PublicKey,
) -> MultisigVerdict {
    let payload = record.signing_payload();
    let vehicle_ok = crypto::verify(&vehicle_cert.subject_key, &payload, &record.vehicle_signature);
    let provider_ok = crypto::verify(provider_public, &payload, &record.provider_signature);
    match (vehicle_ok, provider_ok) {
        (true, true) => MultisigVerdict::Valid,
        (false, true) => MultisigVerdict::VehicleSigBad,
        (true, false) => MultisigVerdict::ProviderSigBad,
        (false, false) => MultisigVerdict::BothBad,
    }
}

/// Discriminant of [`ForensicRecord`]; also stored in hash transactions so
/// the shared ledger knows what kind of content a digest commits to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordKind {
    Bsm,
    Edr,
    Diagnosis,
    Maintenance,
}

impl RecordKind {
    pub const ALL: [RecordKind; 4] = [
        RecordKind::Bsm,
        RecordKind::Edr,
        RecordKind::Diagnosis,
        RecordKind::Maintenance,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RecordKind::Bsm => "bsm",
            RecordKind::Edr => "edr",
            RecordKind::Diagnosis => "diagnosis",
            RecordKind::Maintenance => "maintenance",
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            RecordKind::Bsm => 0,
            RecordKind::Edr => 1,
            RecordKind::Diagnosis => 2,
            RecordKind::Maintenance => 3,
        }
    }

    pub fn from_byte(b: u8) -> Result<RecordKind, CodecError> {
        match b {
            0 => Ok(RecordKind::Bsm),
            1 => Ok(RecordKind::Edr),
            2 => Ok(RecordKind::Diagnosis),
            3 => Ok(RecordKind::Maintenance),
            _ => Err(CodecError::UnknownDiscriminant(b)),
        }
    }
}

/// Any of the four forensic record classes. Encodes as its variant; the
/// variant tags are disjoint so the union needs no extra framing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForensicRecord {
    Bsm(BsmMessage),
    Edr(EdrEvent),
    Diagnosis(DiagnosisReport),
    Maintenance(MaintenanceRecord),
}

impl ForensicRecord {
    pub fn kind(&self) -> RecordKind {
        match self {
            ForensicRecord::Bsm(_) => RecordKind::Bsm,
            ForensicRecord::Edr(_) => RecordKind::Edr,
            ForensicRecord::Diagnosis(_) => RecordKind::Diagnosis,
            ForensicRecord::Maintenance(_) => RecordKind::Maintenance,
        }
    }
}

impl Canon for ForensicRecord {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        match self {
            ForensicRecord::Bsm(v) => v.write(enc),
            ForensicRecord::Edr(v) => v.write(enc),
            ForensicRecord::Diagnosis(v) => v.write(enc),
            ForensicRecord::Maintenance(v) => v.write(enc),
        }
    }

    fn read(dec: &mut Decoder) -> Result<Self, CodecError> {
        match dec.peek_u8()? {
            TAG_BSM => Ok(ForensicRecord::Bsm(BsmMessage::read(dec)?)),
            TAG_EDR => Ok(ForensicRecord::Edr(EdrEvent::read(dec)?)),
            TAG_DIAGNOSIS => Ok(ForensicRecord::Diagnosis(DiagnosisReport::read(dec)?)),
            TAG_MAINTENANCE => Ok(ForensicRecord::Maintenance(MaintenanceRecord::read(dec)?)),
            b => Err(CodecError::UnknownDiscriminant(b)),
        }
    }
}

/// A forensic record bound to a pseudonym and a submission time by the
/// vehicle's signature. This is the unit of content delivery and the input
/// to the on-chain digest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedRecord {
    pub record: ForensicRecord,
    pub submit_time: u64,
    pub pseudonym_id: PseudonymId,
    pub signature: Signature,
}

impl SignedRecord {
    /// Bytes the vehicle signs: record, submission time, pseudonym id.
    pub fn signing_payload(&self) -> Result<Vec<u8>, CodecError> {
        let mut enc = Encoder::with_tag(TAG_SIGNED_RECORD_PAYLOAD);
        self.record.write(&mut enc)?;
        enc.put_u64(self.submit_time);
        enc.put_fixed(&self.pseudonym_id.0);
        Ok(enc.into_bytes())
    }

    /// Digest of the canonical encoding: what goes on the shared ledger.
    pub fn digest(&self) -> Result<Digest, CodecError> {
        crate::encoding::canon_digest(self)
    }

    /// True when `signature` verifies under the certificate's subject key.
    pub fn signature_verifies(&self, cert: &PseudonymCertificate) -> bool {
        match self.signing_payload() {
            Ok(payload) => crypto::verify(&cert.subject_key, &payload, &self.signature),
            Err(_) => false,
        }
    }
}

impl Canon for SignedRecord {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        enc.put_u8(TAG_SIGNED_RECORD);
        self.record.write(enc)?;
        enc.put_u64(self.submit_time);
        enc.put_fixed(&self.pseudonym_id.0);
        enc.put_fixed(&self.signature.0);
        Ok(())
    }

    fn read(dec: &mut Decoder) -> Result<Self, CodecError> {
        dec.expect_tag(TAG_SIGNED_RECORD)?;
        Ok(SignedRecord {
            record: ForensicRecord::read(dec)?,
            submit_time: dec.take_u64()?,
            pseudonym_id: PseudonymId(dec.take_fixed()?),
            signature: Signature(dec.take_fixed()?),
        })
    }
}

/// Sign `record` with the pseudonym active at `submit_time`.
pub fn make_signed_record(
    record: ForensicRecord,
    cert: &PseudonymCertificate,
    key: &KeyPair,
    submit_time: u64,
) -> Result<SignedRecord, RecordError> {
    if !cert.covers(submit_time) {
        return Err(RecordError::OutsideWindow {
            submit_time,
            from: cert.valid_from,
            until: cert.valid_until,
        });
    }
    let mut signed = SignedRecord {
        record,
        submit_time,
        pseudonym_id: cert.pseudonym_id,
        signature: Signature::EMPTY,
    };
    signed.signature = key.sign(&signed.signing_payload()?);
    Ok(signed)
}
