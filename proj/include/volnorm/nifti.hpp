#pragma once

#include <filesystem>

#include "volnorm/volume.hpp"

namespace volnorm {

/// On-disk sample type for write_nifti.
enum class NiftiDatatype : short {
  U8 = 2,     // DT_UINT8
  I16 = 4,    // DT_INT16
  F32 = 16,   // DT_FLOAT32
};

/// Reads a single-file little-endian NIfTI-1 volume (magic "n+1\0",
/// 348-byte header). Supported datatypes: unsigned 8-bit, signed 16-bit,
/// 32-bit real. scl_slope / scl_inter are honoured (slope 0 means no
/// scaling). Grid spacing comes from pixdim; the fastest-varying file axis
/// maps to the column axis. Modality and orientation tags are recovered
/// from the descrip field when this toolkit wrote them.
Volume3D read_nifti(const std::filesystem::path& path);

/// Writes vol as single-file NIfTI-1: 348-byte header, magic "n+1\0" at
/// offset 344, data at offset 352. The descrip field carries
/// "modality=...;orientation=..." so a round trip preserves both tags.
/// Round trips are bit-exact for values representable in the chosen
/// datatype.
void write_nifti(const Volume3D& vol, const std::filesystem::path& path,
                 NiftiDatatype datatype = NiftiDatatype::F32);

}  // namespace volnorm
