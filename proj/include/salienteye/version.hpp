#pragma once

namespace salienteye {

#ifndef SALIENTEYE_VERSION
#define SALIENTEYE_VERSION "0.1.0"
#endif

inline const char* version() { return SALIENTEYE_VERSION; }

}  // namespace salienteye
