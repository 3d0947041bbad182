#pragma once

// Umbrella header.
#include "domgap/classification.hpp"
#include "domgap/color.hpp"
#include "domgap/config.hpp"
#include "domgap/error.hpp"
#include "domgap/fid.hpp"
#include "domgap/image.hpp"
#include "domgap/image_io.hpp"
#include "domgap/manifest.hpp"
#include "domgap/pipeline.hpp"
#include "domgap/texture.hpp"
