#ifndef AKSEG_CONFIG_HPP
#define AKSEG_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>

namespace akseg {

// Flat "key = value" text files; '#' starts a comment line.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values_file(const std::string& path);
std::string serialize_key_values(const KeyValues& kv);

double kv_double(const KeyValues& kv, const std::string& key, double dflt);
std::int64_t kv_int(const KeyValues& kv, const std::string& key,
                    std::int64_t dflt);
bool kv_bool(const KeyValues& kv, const std::string& key, bool dflt);

std::uint64_t fnv1a(const std::string& s);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace akseg

#endif
