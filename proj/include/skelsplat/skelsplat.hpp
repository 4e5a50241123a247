#pragma once

#include "skelsplat/errors.hpp"
#include "skelsplat/geometry.hpp"
#include "skelsplat/skeleton.hpp"
#include "skelsplat/render.hpp"
#include "skelsplat/loss.hpp"
#include "skelsplat/scene.hpp"
#include "skelsplat/optim.hpp"
#include "skelsplat/eval.hpp"
#include "skelsplat/config.hpp"
#include "skelsplat/io.hpp"
