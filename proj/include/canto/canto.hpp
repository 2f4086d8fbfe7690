#ifndef CANTO_CANTO_HPP
#define CANTO_CANTO_HPP

#include "canto/chroma.hpp"
#include "canto/common.hpp"
#include "canto/dsp.hpp"
#include "canto/embedding.hpp"
#include "canto/fingerprint.hpp"
#include "canto/follower.hpp"
#include "canto/matching.hpp"
#include "canto/midi.hpp"
#include "canto/notes.hpp"
#include "canto/songgen.hpp"
#include "canto/synth.hpp"

#endif
