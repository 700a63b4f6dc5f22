/*
 * Copyright 2026 The benchkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

/// MQTT 3.1.1 control packet model and byte-exact encoder/decoder.
///
/// The codec is pure: no I/O, no shared state. Decoding is incremental over
/// whatever prefix of the stream is currently buffered, so the same functions
/// serve the client engine, the stub broker and the tests.
namespace benchkit::codec {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline constexpr std::uint32_t kMaxRemainingLength = 268'435'455;

enum class PacketType : std::uint8_t {
  Connect = 1,
  ConnAck = 2,
  Publish = 3,
  PubAck = 4,
  Subscribe = 8,
  SubAck = 9,
  Unsubscribe = 10,
  UnsubAck = 11,
  PingReq = 12,
  PingResp = 13,
  Disconnect = 14,
};

enum class QoS : std::uint8_t { AtMostOnce = 0, AtLeastOnce = 1, ExactlyOnce = 2 };

/// SUBACK failure return code.
inline constexpr std::uint8_t kSubAckFailure = 0x80;

struct FixedHeader {
  PacketType type = PacketType::PingReq;
  bool dup = false;
  QoS qos = QoS::AtMostOnce;
  bool retain = false;
  std::uint32_t remaining_length = 0;

  bool operator==(const FixedHeader&) const = default;
};

struct Connect {
  std::string client_id;
  std::uint16_t keep_alive_s = 60;
  bool clean_session = true;
  bool operator==(const Connect&) const = default;
};

struct ConnAck {
  bool session_present = false;
  std::uint8_t return_code = 0;
  bool operator==(const ConnAck&) const = default;
};

struct Publish {
  std::string topic;
  std::optional<std::uint16_t> packet_id;
  QoS qos = QoS::AtMostOnce;
  bool dup = false;
  bool retain = false;
  Bytes payload;
  bool operator==(const Publish&) const = default;
};

struct PubAck {
  std::uint16_t packet_id = 0;
  bool operator==(const PubAck&) const = default;
};

struct Subscription {
  std::string filter;
  QoS qos = QoS::AtLeastOnce;
  bool operator==(const Subscription&) const = default;
};

struct Subscribe {
  std::uint16_t packet_id = 0;
  std::vector<Subscription> filters;
  bool operator==(const Subscribe&) const = default;
};

/// Granted QoS (0..2) or kSubAckFailure per requested filter.
struct SubAck {
  std::uint16_t packet_id = 0;
  std::vector<std::uint8_t> granted;
  bool operator==(const SubAck&) const = default;
};

struct Unsubscribe {
  std::uint16_t packet_id = 0;
  std::vector<std::string> filters;
  bool operator==(const Unsubscribe&) const = default;
};

struct UnsubAck {
  std::uint16_t packet_id = 0;
  bool operator==(const UnsubAck&) const = default;
};

struct PingReq {
  bool operator==(const PingReq&) const = default;
};
struct PingResp {
  bool operator==(const PingResp&) const = default;
};
struct Disconnect {
  bool operator==(const Disconnect&) const = default;
};

using ControlPacket = std::variant<Connect, ConnAck, Publish, PubAck, Subscribe, SubAck,
                                   Unsubscribe, UnsubAck, PingReq, PingResp, Disconnect>;

PacketType packet_type(const ControlPacket& p);
std::string_view packet_type_name(PacketType t);

struct NeedMoreBytes {
  std::size_t minimum_additional = 1;
  bool operator==(const NeedMoreBytes&) const = default;
};

struct Decoded {
  ControlPacket packet;
  std::size_t consumed = 0;
  bool operator==(const Decoded&) const = default;
};

struct Malformed {
  std::string reason;
  bool operator==(const Malformed&) const = default;
};

using DecodeOutcome = std::variant<NeedMoreBytes, Decoded, Malformed>;

/// Result of reading a remaining-length varint.
struct RemainingLength {
  std::uint32_t value = 0;
  std::size_t consumed = 0;
  bool operator==(const RemainingLength&) const = default;
};

using LengthOutcome = std::variant<RemainingLength, NeedMoreBytes, Malformed>;

class CodecError : public std::runtime_error {
 public:
  enum class Kind { OutOfRange, InvalidPacket };
  CodecError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Throws CodecError(OutOfRange) above kMaxRemainingLength.
Bytes encode_remaining_length(std::uint32_t n);
LengthOutcome decode_remaining_length(ByteView bytes);

/// Throws CodecError(InvalidPacket) when the packet breaks its invariants.
Bytes encode_packet(const ControlPacket& p);
DecodeOutcome decode_packet(ByteView bytes);

/// Checks everything encode_packet would reject, without encoding.
std::optional<std::string> packet_violation(const ControlPacket& p);

enum class TopicError {
  Empty,
  TooLong,
  EmbeddedNul,
  InvalidUtf8,
  WildcardInName,
  MisplacedHash,
  MisplacedPlus,
};

std::string_view topic_error_name(TopicError e);

/// Filters may carry '+' (a whole level) and '#' (the final whole level).
std::optional<TopicError> validate_topic_filter(std::string_view s);
/// Topic names carry no wildcards at all.
std::optional<TopicError> validate_topic_name(std::string_view s);

bool is_valid_utf8(std::string_view s);

/// Reassembles packets out of a TCP byte stream.
class StreamDecoder {
 public:
  void feed(ByteView chunk);

  /// Next complete packet, std::nullopt when more bytes are needed.
  /// Throws CodecError(InvalidPacket) on a malformed stream; the connection
  /// must be dropped after that.
  std::optional<ControlPacket> next();

  std::size_t buffered() const noexcept { return buffer_.size() - offset_; }

 private:
  Bytes buffer_;
  std::size_t offset_ = 0;
};

}  // namespace benchkit::codec
