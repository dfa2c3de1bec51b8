#pragma once

// Scalar type of every tensor buffer.
//
// The production build stores float. Building with AIO_DOUBLE switches the
// whole library to double; the gradient checker and its tests link that
// variant. Each precision lives in its own inline namespace so both libraries
// can be linked into one binary.

#ifdef AIO_DOUBLE
#define AIO_ABI f64
#else
#define AIO_ABI f32
#endif

namespace aio::inline AIO_ABI {

#ifdef AIO_DOUBLE
using Real = double;
#else
using Real = float;
#endif

}  // namespace aio::inline AIO_ABI
