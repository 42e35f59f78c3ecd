#pragma once

#include <iosfwd>

namespace gatenet {

// Runs the library invariant suite (op identities, gradient checks, fold
// round trips, metric identities, container round trip, determinism) and
// prints one line per section. Returns true when everything passes. quick
// mode shrinks the random sample counts.
bool run_selfcheck(bool quick, std::ostream& out);

}  // namespace gatenet
