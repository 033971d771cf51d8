#include "agov/audit_ledger.hpp"

#include <charconv>
#include <sstream>

#include "agov/error.hpp"

namespace agov {

namespace {

bool valid_kind(std::string_view kind) {
  if (kind.empty()) return false;
  for (char c : kind) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    if (!ok) return false;
  }
  return true;
}

std::optional<std::uint64_t> parse_decimal(std::string_view s) {
  if (s.empty() || (s.size() > 1 && s[0] == '0')) return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<AuditEntry> parse_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (fields.size() < 7) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) return std::nullopt;
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  fields.push_back(line.substr(start));
  AuditEntry e;
  auto seq = parse_decimal(fields[0]);
  auto step = parse_decimal(fields[1]);
  auto at_seq = parse_decimal(fields[2]);
  if (!seq || !step || !at_seq || !valid_kind(fields[3])) return std::nullopt;
  auto ph = digest_from_hex(fields[4]);
  auto prev = digest_from_hex(fields[5]);
  auto eh = digest_from_hex(fields[6]);
  if (!ph || !prev || !eh) return std::nullopt;
  if (fields[7].find('\t') != std::string_view::npos) return std::nullopt;
  e.seq = *seq;
  e.at = SimTime{*step, *at_seq};
  e.payload_kind = std::string(fields[3]);
  e.payload = std::string(fields[7]);
  e.payload_hash = *ph;
  e.prev_hash = *prev;
  e.entry_hash = *eh;
  return e;
}

}  // namespace

Digest compute_payload_hash(std::string_view kind, std::string_view payload) {
  std::string buf;
  append_u64be(buf, kind.size());
  buf.append(kind);
  buf.append(payload);
  return sha256(buf);
}

Digest compute_entry_hash(std::uint64_t seq, SimTime at, const Digest& payload_hash, const Digest& prev_hash) {
  std::string buf;
  append_u64be(buf, seq);
  append_u64be(buf, at.step);
  append_u64be(buf, at.seq);
  buf.append(reinterpret_cast<const char*>(payload_hash.data()), payload_hash.size());
  buf.append(reinterpret_cast<const char*>(prev_hash.data()), prev_hash.size());
  return sha256(buf);
}

std::string format_entry_line(const AuditEntry& e) {
  std::string s;
  s.reserve(220 + e.payload.size());
  s += std::to_string(e.seq);
  s += '\t';
  s += std::to_string(e.at.step);
  s += '\t';
  s += std::to_string(e.at.seq);
  s += '\t';
  s += e.payload_kind;
  s += '\t';
  s += to_hex(e.payload_hash);
  s += '\t';
  s += to_hex(e.prev_hash);
  s += '\t';
  s += to_hex(e.entry_hash);
  s += '\t';
  s += e.payload;
  s += '\n';
  return s;
}

VerifyResult verify_ledger_bytes(std::string_view bytes) {
  VerifyResult r;
  Digest prev{};
  std::uint64_t expected = 0;
  std::size_t pos = 0;
  auto broken = [&](std::string reason) {
    r.ok = false;
    r.first_bad_seq = expected;
    r.reason = std::move(reason);
    r.entry_count = expected;
    r.head_hash = prev;
    return r;
  };
  while (pos < bytes.size()) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) return broken("unterminated line");
    const std::string_view line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    auto entry = parse_line(line);
    if (!entry) return broken("malformed entry");
    std::string reserialized = format_entry_line(*entry);
    reserialized.pop_back();
    if (reserialized != line) return broken("non-canonical entry");
    if (entry->seq != expected) return broken("sequence gap");
    if (entry->prev_hash != prev) return broken("prev_hash mismatch");
    if (compute_payload_hash(entry->payload_kind, entry->payload) != entry->payload_hash) {
      return broken("payload hash mismatch");
    }
    if (compute_entry_hash(entry->seq, entry->at, entry->payload_hash, entry->prev_hash) != entry->entry_hash) {
      return broken("entry hash mismatch");
    }
    prev = entry->entry_hash;
    ++expected;
  }
  r.entry_count = expected;
  r.head_hash = prev;
  return r;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  return ss.str();
}

VerifyResult verify_ledger_file(const std::filesystem::path& path) { return verify_ledger_bytes(read_file(path)); }

std::vector<AuditEntry> read_ledger_bytes(std::string_view bytes) {
  const auto vr = verify_ledger_bytes(bytes);
  if (!vr.ok) {
    throw Error(ErrorCode::CorruptLedger, "broken at seq " + std::to_string(vr.first_bad_seq) + ": " + vr.reason);
  }
  std::vector<AuditEntry> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto nl = bytes.find('\n', pos);
    out.push_back(*parse_line(bytes.substr(pos, nl - pos)));
    pos = nl + 1;
  }
  return out;
}

nlohmann::json to_json(const Attestation& a) {
  return nlohmann::json{{"head_seq", a.head_seq},
                        {"head_hash", to_hex(a.head_hash)},
                        {"mac", to_hex(a.mac)},
                        {"issued_step", a.issued_at.step},
                        {"issued_seq", a.issued_at.seq}};
}

Attestation attestation_from_json(const nlohmann::json& j) {
  Attestation a;
  a.head_seq = j.at("head_seq").get<std::uint64_t>();
  auto hh = digest_from_hex(j.at("head_hash").get<std::string>());
  auto mac = digest_from_hex(j.at("mac").get<std::string>());
  if (!hh || !mac) throw Error(ErrorCode::ParseError, "attestation hashes must be 64 lowercase hex digits");
  a.head_hash = *hh;
  a.mac = *mac;
  a.issued_at = SimTime{j.at("issued_step").get<std::uint64_t>(), j.at("issued_seq").get<std::uint64_t>()};
  return a;
}

namespace {

Digest attestation_mac(std::string_view key, std::uint64_t head_seq, const Digest& head_hash) {
  std::string msg;
  append_u64be(msg, head_seq);
  msg.append(reinterpret_cast<const char*>(head_hash.data()), head_hash.size());
  return hmac_sha256(key, msg);
}

}  // namespace

AuditLedger::AuditLedger(const std::filesystem::path& file) {
  out_.emplace(file, std::ios::binary | std::ios::trunc);
  if (!*out_) throw Error(ErrorCode::IoFailure, "cannot open ledger file " + file.string());
}

const AuditEntry& AuditLedger::append(std::string_view kind, std::string payload, SimTime at) {
  if (!valid_kind(kind)) throw Error(ErrorCode::ValidationError, "invalid payload kind '" + std::string(kind) + "'");
  if (payload.find_first_of("\t\n") != std::string::npos) {
    throw Error(ErrorCode::ValidationError, "payload may not contain TAB or LF");
  }
  AuditEntry e;
  e.seq = entries_.size();
  e.at = at;
  e.payload_kind = std::string(kind);
  e.payload = std::move(payload);
  e.payload_hash = compute_payload_hash(e.payload_kind, e.payload);
  e.prev_hash = head_hash();
  e.entry_hash = compute_entry_hash(e.seq, e.at, e.payload_hash, e.prev_hash);
  if (out_) {
    *out_ << format_entry_line(e);
    out_->flush();
    if (!*out_) throw Error(ErrorCode::IoFailure, "ledger write failed at seq " + std::to_string(e.seq));
  }
  entries_.push_back(std::move(e));
  if (observer_) observer_(entries_.back());
  return entries_.back();
}

Digest AuditLedger::head_hash() const noexcept { return entries_.empty() ? Digest{} : entries_.back().entry_hash; }

std::string AuditLedger::serialize() const {
  std::string s;
  for (const auto& e : entries_) s += format_entry_line(e);
  return s;
}

Attestation AuditLedger::attest(std::string_view auditor_key, SimTime issued_at) const {
  return attest_ledger_bytes(serialize(), auditor_key, issued_at);
}

Attestation attest_ledger_bytes(std::string_view ledger_bytes, std::string_view auditor_key, SimTime issued_at) {
  const auto vr = verify_ledger_bytes(ledger_bytes);
  if (!vr.ok) throw Error(ErrorCode::CorruptLedger, "refusing to attest: broken at seq " + std::to_string(vr.first_bad_seq));
  if (vr.entry_count == 0) throw Error(ErrorCode::CorruptLedger, "refusing to attest an empty ledger");
  Attestation a;
  a.head_seq = vr.entry_count - 1;
  a.head_hash = vr.head_hash;
  a.mac = attestation_mac(auditor_key, a.head_seq, a.head_hash);
  a.issued_at = issued_at;
  return a;
}

bool verify_attestation(const Attestation& att, std::string_view ledger_bytes, std::string_view key) {
  if (attestation_mac(key, att.head_seq, att.head_hash) != att.mac) return false;
  const auto vr = verify_ledger_bytes(ledger_bytes);
  if (!vr.ok || vr.entry_count <= att.head_seq) return false;
  // Walk to the attested entry.
  std::size_t pos = 0;
  for (std::uint64_t i = 0; i < att.head_seq; ++i) pos = ledger_bytes.find('\n', pos) + 1;
  const auto nl = ledger_bytes.find('\n', pos);
  auto entry = parse_line(ledger_bytes.substr(pos, nl - pos));
  return entry && entry->entry_hash == att.head_hash;
}

}  // namespace agov
