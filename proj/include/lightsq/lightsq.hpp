#pragma once

#include "lightsq/core.hpp"
#include "lightsq/decomp.hpp"
#include "lightsq/distance_transform.hpp"
#include "lightsq/fitter.hpp"
#include "lightsq/grid.hpp"
#include "lightsq/hull.hpp"
#include "lightsq/isosurface.hpp"
#include "lightsq/mesh_io.hpp"
#include "lightsq/metrics.hpp"
#include "lightsq/pipeline.hpp"
#include "lightsq/serialization.hpp"
#include "lightsq/superquadric.hpp"
#include "lightsq/voxelize.hpp"
