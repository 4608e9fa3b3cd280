#pragma once

#include "geometry.hpp"
#include "delaunay.hpp"
#include "mesh.hpp"
#include "assembly.hpp"
#include "spectral.hpp"
#include "evolution.hpp"
#include "carleman.hpp"
#include "observability.hpp"
#include "io.hpp"
#include "config.hpp"
