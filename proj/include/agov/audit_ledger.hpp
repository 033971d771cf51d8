#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "agov/crypto.hpp"
#include "agov/sim_kernel.hpp"

namespace agov {

/// Ledger file layout. One entry per line, eight TAB-separated ASCII fields, LF-terminated:
///
///   seq  step  at_seq  kind  payload_hash  prev_hash  entry_hash  payload
///
/// seq/step/at_seq are unsigned decimals without leading zeros; kind matches
/// [A-Za-z0-9_]+; the three hashes are 64 lowercase hex digits; payload is the raw
/// payload bytes (canonical JSON in practice) and may not contain TAB or LF.
///
///   payload_hash = SHA256(u64be(len(kind)) || kind || payload)
///   entry_hash   = SHA256(u64be(seq) || u64be(step) || u64be(at_seq) || payload_hash || prev_hash)
///
/// prev_hash of seq 0 is 32 zero bytes. Any line that does not re-serialize to exactly
/// the same bytes is malformed.
struct AuditEntry {
  std::uint64_t seq{0};
  SimTime at;
  std::string payload_kind;
  std::string payload;
  Digest payload_hash{};
  Digest prev_hash{};
  Digest entry_hash{};
};

Digest compute_payload_hash(std::string_view kind, std::string_view payload);
Digest compute_entry_hash(std::uint64_t seq, SimTime at, const Digest& payload_hash, const Digest& prev_hash);
std::string format_entry_line(const AuditEntry& e);

struct VerifyResult {
  bool ok{true};
  std::uint64_t first_bad_seq{0};
  std::string reason;
  std::uint64_t entry_count{0};
  Digest head_hash{};  // entry_hash of the last good entry
};

// Works on the file bytes alone. Throws IoFailure if the file cannot be read.
VerifyResult verify_ledger_bytes(std::string_view bytes);
VerifyResult verify_ledger_file(const std::filesystem::path& path);
// Parses a verified ledger; throws CorruptLedger if the chain is broken.
std::vector<AuditEntry> read_ledger_bytes(std::string_view bytes);

struct Attestation {
  std::uint64_t head_seq{0};
  Digest head_hash{};
  Digest mac{};
  SimTime issued_at;
};

nlohmann::json to_json(const Attestation& a);
Attestation attestation_from_json(const nlohmann::json& j);

/// Append-only hash-chained ledger with write-ahead persistence.
class AuditLedger {
public:
  AuditLedger() = default;  // in-memory only
  explicit AuditLedger(const std::filesystem::path& file);

  AuditLedger(const AuditLedger&) = delete;
  AuditLedger& operator=(const AuditLedger&) = delete;

  // Persisted (and flushed) before returning. Throws IoFailure.
  const AuditEntry& append(std::string_view kind, std::string payload, SimTime at);
  const AuditEntry& append(std::string_view kind, const nlohmann::json& payload, SimTime at) {
    return append(kind, payload.dump(), at);
  }

  const std::vector<AuditEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  Digest head_hash() const noexcept;
  std::string serialize() const;

  // Throws CorruptLedger when the in-memory chain does not verify.
  Attestation attest(std::string_view auditor_key, SimTime issued_at) const;

  // Called after each append has been persisted.
  void set_observer(std::function<void(const AuditEntry&)> f) { observer_ = std::move(f); }

private:
  std::vector<AuditEntry> entries_;
  std::optional<std::ofstream> out_;
  std::function<void(const AuditEntry&)> observer_;
};

Attestation attest_ledger_bytes(std::string_view ledger_bytes, std::string_view auditor_key, SimTime issued_at);
// True iff the MAC checks out under `key`, the ledger verifies, and the attested
// head is still present with the same hash.
bool verify_attestation(const Attestation& att, std::string_view ledger_bytes, std::string_view key);

std::string read_file(const std::filesystem::path& path);

}  // namespace agov
