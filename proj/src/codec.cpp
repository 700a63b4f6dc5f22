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
#include "benchkit/codec.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace benchkit::codec {

namespace {

constexpr std::uint8_t kProtocolLevel311 = 4;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  void str(std::string_view s) {
    u16(static_cast<std::uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }
  Bytes take() { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  Bytes out_;
};

// Reader over exactly one packet body. Every accessor fails instead of
// reading past the declared remaining length.
class Reader {
 public:
  explicit Reader(ByteView body) : body_(body) {}

  bool u8(std::uint8_t& v) {
    if (remaining() < 1) return false;
    v = body_[pos_++];
    return true;
  }
  bool u16(std::uint16_t& v) {
    if (remaining() < 2) return false;
    v = static_cast<std::uint16_t>((body_[pos_] << 8) | body_[pos_ + 1]);
    pos_ += 2;
    return true;
  }
  bool str(std::string& s) {
    std::uint16_t len = 0;
    if (!u16(len) || remaining() < len) return false;
    s.assign(reinterpret_cast<const char*>(body_.data() + pos_), len);
    pos_ += len;
    return true;
  }
  Bytes rest() {
    Bytes out(body_.begin() + static_cast<std::ptrdiff_t>(pos_), body_.end());
    pos_ = body_.size();
    return out;
  }
  std::size_t remaining() const { return body_.size() - pos_; }

 private:
  ByteView body_;
  std::size_t pos_ = 0;
};

std::uint8_t fixed_flags(const ControlPacket& p) {
  return std::visit(Overloaded{
                        [](const Publish& pub) -> std::uint8_t {
                          return static_cast<std::uint8_t>((pub.dup ? 0x08 : 0) |
                                                           (static_cast<std::uint8_t>(pub.qos) << 1) |
                                                           (pub.retain ? 0x01 : 0));
                        },
                        [](const Subscribe&) -> std::uint8_t { return 0x02; },
                        [](const Unsubscribe&) -> std::uint8_t { return 0x02; },
                        [](const auto&) -> std::uint8_t { return 0x00; },
                    },
                    p);
}

std::optional<std::string> string_violation(std::string_view s, std::string_view what) {
  if (s.size() > 0xFFFF) return fmt::format("{} longer than 65535 bytes", what);
  if (!is_valid_utf8(s)) return fmt::format("{} is not valid UTF-8", what);
  return std::nullopt;
}

std::optional<std::string> filter_list_violation(const auto& filters, auto&& get_filter) {
  if (filters.empty()) return "empty topic filter list";
  for (const auto& f : filters) {
    if (auto err = validate_topic_filter(get_filter(f)))
      return fmt::format("invalid topic filter: {}", topic_error_name(*err));
  }
  return std::nullopt;
}

Malformed malformed(std::string reason) { return Malformed{std::move(reason)}; }

std::variant<ControlPacket, Malformed> decode_body(PacketType type, std::uint8_t flags, ByteView body) {
  Reader r(body);
  auto trailing = [&]() -> bool { return r.remaining() != 0; };

  switch (type) {
    case PacketType::Connect: {
      if (flags != 0) return malformed("CONNECT with non-zero fixed header flags");
      std::string proto;
      std::uint8_t level = 0;
      std::uint8_t cflags = 0;
      std::uint16_t keep_alive = 0;
      if (!r.str(proto) || !r.u8(level) || !r.u8(cflags) || !r.u16(keep_alive))
        return malformed("truncated CONNECT variable header");
      if (proto != "MQTT") return malformed(fmt::format("unknown protocol name '{}'", proto));
      if (level != kProtocolLevel311)
        return malformed(fmt::format("unsupported protocol level {}", level));
      if (cflags & 0x01) return malformed("CONNECT reserved flag set");
      if (cflags & 0xFC) return malformed("CONNECT will/username/password flags are not supported");
      Connect c;
      c.clean_session = (cflags & 0x02) != 0;
      c.keep_alive_s = keep_alive;
      if (!r.str(c.client_id)) return malformed("truncated CONNECT client id");
      if (!is_valid_utf8(c.client_id)) return malformed("client id is not valid UTF-8");
      if (trailing()) return malformed("trailing bytes after CONNECT payload");
      return c;
    }
    case PacketType::ConnAck: {
      if (flags != 0) return malformed("CONNACK with non-zero fixed header flags");
      std::uint8_t ack = 0;
      ConnAck c;
      if (!r.u8(ack) || !r.u8(c.return_code) || trailing())
        return malformed("CONNACK remaining length must be 2");
      if (ack & 0xFE) return malformed("CONNACK reserved acknowledge flags set");
      if (c.return_code > 5) return malformed(fmt::format("CONNACK return code {} out of range", c.return_code));
      c.session_present = (ack & 0x01) != 0;
      return c;
    }
    case PacketType::Publish: {
      Publish p;
      const auto qos = static_cast<std::uint8_t>((flags >> 1) & 0x03);
      if (qos == 3) return malformed("PUBLISH with QoS 3");
      if (qos == 2) return malformed("PUBLISH with QoS 2 is not supported");
      p.qos = static_cast<QoS>(qos);
      p.dup = (flags & 0x08) != 0;
      p.retain = (flags & 0x01) != 0;
      if (p.dup && p.qos == QoS::AtMostOnce) return malformed("DUP set on a QoS 0 PUBLISH");
      if (!r.str(p.topic)) return malformed("truncated PUBLISH topic");
      if (auto err = validate_topic_name(p.topic))
        return malformed(fmt::format("invalid topic name: {}", topic_error_name(*err)));
      if (p.qos != QoS::AtMostOnce) {
        std::uint16_t id = 0;
        if (!r.u16(id)) return malformed("truncated PUBLISH packet id");
        if (id == 0) return malformed("packet id 0");
        p.packet_id = id;
      }
      p.payload = r.rest();
      return p;
    }
    case PacketType::PubAck:
    case PacketType::UnsubAck: {
      if (flags != 0) return malformed("ack with non-zero fixed header flags");
      std::uint16_t id = 0;
      if (!r.u16(id) || trailing()) return malformed("ack remaining length must be 2");
      if (id == 0) return malformed("packet id 0");
      if (type == PacketType::PubAck) return PubAck{id};
      return UnsubAck{id};
    }
    case PacketType::Subscribe: {
      if (flags != 0x02) return malformed("SUBSCRIBE fixed header flags must be 0b0010");
      Subscribe s;
      if (!r.u16(s.packet_id)) return malformed("truncated SUBSCRIBE packet id");
      if (s.packet_id == 0) return malformed("packet id 0");
      while (r.remaining() > 0) {
        Subscription sub;
        std::uint8_t q = 0;
        if (!r.str(sub.filter) || !r.u8(q)) return malformed("truncated SUBSCRIBE payload");
        if (q > 2) return malformed("SUBSCRIBE requested QoS byte out of range");
        if (sub.filter.empty() || !is_valid_utf8(sub.filter))
          return malformed("SUBSCRIBE topic filter empty or not valid UTF-8");
        sub.qos = static_cast<QoS>(q);
        s.filters.push_back(std::move(sub));
      }
      if (s.filters.empty()) return malformed("SUBSCRIBE without topic filters");
      return s;
    }
    case PacketType::SubAck: {
      if (flags != 0) return malformed("SUBACK with non-zero fixed header flags");
      SubAck s;
      if (!r.u16(s.packet_id)) return malformed("truncated SUBACK packet id");
      if (s.packet_id == 0) return malformed("packet id 0");
      while (r.remaining() > 0) {
        std::uint8_t code = 0;
        r.u8(code);
        if (code > 2 && code != kSubAckFailure)
          return malformed(fmt::format("SUBACK return code 0x{:02X} invalid", code));
        s.granted.push_back(code);
      }
      if (s.granted.empty()) return malformed("SUBACK without return codes");
      return s;
    }
    case PacketType::Unsubscribe: {
      if (flags != 0x02) return malformed("UNSUBSCRIBE fixed header flags must be 0b0010");
      Unsubscribe u;
      if (!r.u16(u.packet_id)) return malformed("truncated UNSUBSCRIBE packet id");
      if (u.packet_id == 0) return malformed("packet id 0");
      while (r.remaining() > 0) {
        std::string f;
        if (!r.str(f)) return malformed("truncated UNSUBSCRIBE payload");
        if (f.empty() || !is_valid_utf8(f)) return malformed("UNSUBSCRIBE topic filter empty or not valid UTF-8");
        u.filters.push_back(std::move(f));
      }
      if (u.filters.empty()) return malformed("UNSUBSCRIBE without topic filters");
      return u;
    }
    case PacketType::PingReq:
    case PacketType::PingResp:
    case PacketType::Disconnect: {
      if (flags != 0) return malformed("non-zero fixed header flags");
      if (!body.empty()) return malformed("remaining length must be 0");
      if (type == PacketType::PingReq) return PingReq{};
      if (type == PacketType::PingResp) return PingResp{};
      return Disconnect{};
    }
  }
  return malformed("unreachable packet type");
}

std::optional<PacketType> known_type(std::uint8_t nibble) {
  switch (nibble) {
    case 1: case 2: case 3: case 4: case 8: case 9: case 10: case 11: case 12: case 13: case 14:
      return static_cast<PacketType>(nibble);
    default:
      return std::nullopt;
  }
}

}  // namespace

PacketType packet_type(const ControlPacket& p) {
  return std::visit(Overloaded{
                        [](const Connect&) { return PacketType::Connect; },
                        [](const ConnAck&) { return PacketType::ConnAck; },
                        [](const Publish&) { return PacketType::Publish; },
                        [](const PubAck&) { return PacketType::PubAck; },
                        [](const Subscribe&) { return PacketType::Subscribe; },
                        [](const SubAck&) { return PacketType::SubAck; },
                        [](const Unsubscribe&) { return PacketType::Unsubscribe; },
                        [](const UnsubAck&) { return PacketType::UnsubAck; },
                        [](const PingReq&) { return PacketType::PingReq; },
                        [](const PingResp&) { return PacketType::PingResp; },
                        [](const Disconnect&) { return PacketType::Disconnect; },
                    },
                    p);
}

std::string_view packet_type_name(PacketType t) {
  switch (t) {
    case PacketType::Connect: return "CONNECT";
    case PacketType::ConnAck: return "CONNACK";
    case PacketType::Publish: return "PUBLISH";
    case PacketType::PubAck: return "PUBACK";
    case PacketType::Subscribe: return "SUBSCRIBE";
    case PacketType::SubAck: return "SUBACK";
    case PacketType::Unsubscribe: return "UNSUBSCRIBE";
    case PacketType::UnsubAck: return "UNSUBACK";
    case PacketType::PingReq: return "PINGREQ";
    case PacketType::PingResp: return "PINGRESP";
    case PacketType::Disconnect: return "DISCONNECT";
  }
  return "UNKNOWN";
}

Bytes encode_remaining_length(std::uint32_t n) {
  if (n > kMaxRemainingLength)
    throw CodecError(CodecError::Kind::OutOfRange, fmt::format("remaining length {} exceeds {}", n, kMaxRemainingLength));
  Bytes out;
  do {
    auto digit = static_cast<std::uint8_t>(n % 128);
    n /= 128;
    if (n > 0) digit |= 0x80;
    out.push_back(digit);
  } while (n > 0);
  return out;
}

LengthOutcome decode_remaining_length(ByteView bytes) {
  std::uint32_t value = 0;
  std::uint32_t multiplier = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    if (i >= bytes.size()) return NeedMoreBytes{1};
    const std::uint8_t b = bytes[i];
    value += (b & 0x7F) * multiplier;
    if ((b & 0x80) == 0) return RemainingLength{value, i + 1};
    multiplier *= 128;
  }
  return Malformed{"remaining length continues past 4 bytes"};
}

std::optional<std::string> packet_violation(const ControlPacket& p) {
  return std::visit(
      Overloaded{
          [](const Connect& c) -> std::optional<std::string> { return string_violation(c.client_id, "client id"); },
          [](const ConnAck& c) -> std::optional<std::string> {
            if (c.return_code > 5) return "CONNACK return code out of range";
            return std::nullopt;
          },
          [](const Publish& pub) -> std::optional<std::string> {
            if (auto err = validate_topic_name(pub.topic))
              return fmt::format("invalid topic name: {}", topic_error_name(*err));
            if (pub.qos == QoS::ExactlyOnce) return "QoS 2 PUBLISH is not supported";
            if (pub.qos == QoS::AtMostOnce) {
              if (pub.packet_id) return "QoS 0 PUBLISH must not carry a packet id";
              if (pub.dup) return "QoS 0 PUBLISH must not set DUP";
            } else {
              if (!pub.packet_id) return "QoS 1 PUBLISH requires a packet id";
              if (*pub.packet_id == 0) return "packet id 0";
            }
            return std::nullopt;
          },
          [](const PubAck& a) -> std::optional<std::string> {
            if (a.packet_id == 0) return "packet id 0";
            return std::nullopt;
          },
          [](const Subscribe& s) -> std::optional<std::string> {
            if (s.packet_id == 0) return "packet id 0";
            return filter_list_violation(s.filters, [](const Subscription& sub) -> std::string_view { return sub.filter; });
          },
          [](const SubAck& s) -> std::optional<std::string> {
            if (s.packet_id == 0) return "packet id 0";
            if (s.granted.empty()) return "SUBACK without return codes";
            for (auto code : s.granted)
              if (code > 2 && code != kSubAckFailure) return "SUBACK return code invalid";
            return std::nullopt;
          },
          [](const Unsubscribe& u) -> std::optional<std::string> {
            if (u.packet_id == 0) return "packet id 0";
            return filter_list_violation(u.filters, [](const std::string& f) -> std::string_view { return f; });
          },
          [](const UnsubAck& a) -> std::optional<std::string> {
            if (a.packet_id == 0) return "packet id 0";
            return std::nullopt;
          },
          [](const auto&) -> std::optional<std::string> { return std::nullopt; },
      },
      p);
}

Bytes encode_packet(const ControlPacket& p) {
  if (auto violation = packet_violation(p))
    throw CodecError(CodecError::Kind::InvalidPacket, *violation);

  Writer body;
  std::visit(Overloaded{
                 [&](const Connect& c) {
                   body.str("MQTT");
                   body.u8(kProtocolLevel311);
                   body.u8(c.clean_session ? 0x02 : 0x00);
                   body.u16(c.keep_alive_s);
                   body.str(c.client_id);
                 },
                 [&](const ConnAck& c) {
                   body.u8(c.session_present ? 0x01 : 0x00);
                   body.u8(c.return_code);
                 },
                 [&](const Publish& pub) {
                   body.str(pub.topic);
                   if (pub.packet_id) body.u16(*pub.packet_id);
                   body.raw(pub.payload);
                 },
                 [&](const PubAck& a) { body.u16(a.packet_id); },
                 [&](const Subscribe& s) {
                   body.u16(s.packet_id);
                   for (const auto& sub : s.filters) {
                     body.str(sub.filter);
                     body.u8(static_cast<std::uint8_t>(sub.qos));
                   }
                 },
                 [&](const SubAck& s) {
                   body.u16(s.packet_id);
                   for (auto code : s.granted) body.u8(code);
                 },
                 [&](const Unsubscribe& u) {
                   body.u16(u.packet_id);
                   for (const auto& f : u.filters) body.str(f);
                 },
                 [&](const UnsubAck& a) { body.u16(a.packet_id); },
                 [](const auto&) {},
             },
             p);

  if (body.size() > kMaxRemainingLength)
    throw CodecError(CodecError::Kind::InvalidPacket, "packet body exceeds the maximum remaining length");
  Bytes payload = body.take();
  Bytes out;
  const Bytes length = encode_remaining_length(static_cast<std::uint32_t>(payload.size()));
  out.reserve(1 + length.size() + payload.size());
  out.push_back(static_cast<std::uint8_t>((static_cast<std::uint8_t>(packet_type(p)) << 4) | fixed_flags(p)));
  out.insert(out.end(), length.begin(), length.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

DecodeOutcome decode_packet(ByteView bytes) {
  if (bytes.empty()) return NeedMoreBytes{2};
  const std::uint8_t first = bytes[0];
  const auto nibble = static_cast<std::uint8_t>(first >> 4);
  const auto type = known_type(nibble);
  if (!type) {
    if (nibble == 0 || nibble == 15) return Malformed{fmt::format("reserved packet type {}", nibble)};
    return Malformed{fmt::format("unsupported packet type {}", nibble)};
  }

  const auto length = decode_remaining_length(bytes.subspan(1));
  if (const auto* need = std::get_if<NeedMoreBytes>(&length)) return *need;
  if (const auto* bad = std::get_if<Malformed>(&length)) return *bad;
  const auto& rl = std::get<RemainingLength>(length);

  const std::size_t header_len = 1 + rl.consumed;
  const std::size_t total = header_len + rl.value;
  if (bytes.size() < total) return NeedMoreBytes{total - bytes.size()};

  auto body = decode_body(*type, static_cast<std::uint8_t>(first & 0x0F), bytes.subspan(header_len, rl.value));
  if (auto* bad = std::get_if<Malformed>(&body)) return std::move(*bad);
  return Decoded{std::move(std::get<ControlPacket>(body)), total};
}

std::string_view topic_error_name(TopicError e) {
  switch (e) {
    case TopicError::Empty: return "empty";
    case TopicError::TooLong: return "too_long";
    case TopicError::EmbeddedNul: return "embedded_nul";
    case TopicError::InvalidUtf8: return "invalid_utf8";
    case TopicError::WildcardInName: return "wildcard_in_name";
    case TopicError::MisplacedHash: return "misplaced_hash";
    case TopicError::MisplacedPlus: return "misplaced_plus";
  }
  return "unknown";
}

namespace {

std::optional<TopicError> basic_topic_checks(std::string_view s) {
  if (s.empty()) return TopicError::Empty;
  if (s.size() > 0xFFFF) return TopicError::TooLong;
  if (s.find('\0') != std::string_view::npos) return TopicError::EmbeddedNul;
  if (!is_valid_utf8(s)) return TopicError::InvalidUtf8;
  return std::nullopt;
}

}  // namespace

std::optional<TopicError> validate_topic_filter(std::string_view s) {
  if (auto err = basic_topic_checks(s)) return err;
  std::size_t level_start = 0;
  while (true) {
    const std::size_t slash = s.find('/', level_start);
    const bool last = slash == std::string_view::npos;
    const std::string_view level = s.substr(level_start, last ? std::string_view::npos : slash - level_start);
    if (level.find('#') != std::string_view::npos && (level != "#" || !last)) return TopicError::MisplacedHash;
    if (level.find('+') != std::string_view::npos && level != "+") return TopicError::MisplacedPlus;
    if (last) break;
    level_start = slash + 1;
  }
  return std::nullopt;
}

std::optional<TopicError> validate_topic_name(std::string_view s) {
  if (auto err = basic_topic_checks(s)) return err;
  if (s.find_first_of("+#") != std::string_view::npos) return TopicError::WildcardInName;
  return std::nullopt;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c == 0) return false;
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong forms, surrogates, beyond U+10FFFF
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) return false;
    if (cp >= 0xD800 && cp <= 0xDFFF) return false;
    if (cp > 0x10FFFF) return false;
    i += len;
  }
  return true;
}

void StreamDecoder::feed(ByteView chunk) {
  if (offset_ > 0 && offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  } else if (offset_ > (1u << 20) && offset_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
    offset_ = 0;
  }
  buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
}

std::optional<ControlPacket> StreamDecoder::next() {
  auto outcome = decode_packet(ByteView(buffer_).subspan(offset_));
  if (std::holds_alternative<NeedMoreBytes>(outcome)) return std::nullopt;
  if (auto* bad = std::get_if<Malformed>(&outcome)) throw CodecError(CodecError::Kind::InvalidPacket, bad->reason);
  auto& decoded = std::get<Decoded>(outcome);
  offset_ += decoded.consumed;
  return std::move(decoded.packet);
}

}  // namespace benchkit::codec
