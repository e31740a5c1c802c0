#pragma once

#include "afreeqc/fields.hpp"

#include <optional>
#include <string>
#include <vector>

namespace afreeqc {

/// Contents of an AFK1 field file.
struct FieldData {
  GridSpec grid;
  int m = 1;
  std::optional<Mask> mask;
  std::vector<double> values;  ///< node-major, component fastest

  static FieldData from(const PeriodicField& u);
  static FieldData from(const DomainField& u);
  PeriodicField periodic() const;
  DomainField domain() const;
};

/// AFK1 layout (little-endian): "AFK1FLD\0", u32 version = 1, u32 reserved,
/// u32 n, u32 m, u32 N[n], f64 lo[n], f64 hi[n], u8 mask flag,
/// [u8 mask[#nodes]], f64 values[#nodes * m].
std::vector<unsigned char> encode_afk1(const FieldData& f);
FieldData decode_afk1(const std::vector<unsigned char>& bytes);

void write_afk1(const std::string& path, const FieldData& f);
FieldData read_afk1(const std::string& path);

/// Writes text to path through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& text);
std::string read_file(const std::string& path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// CSV with columns x0..x{n-1},magnitude for the nodes of the field (mask only).
std::string magnitude_csv(const FieldData& f);

}  // namespace afreeqc
