pub mod io;
pub mod mission;
pub mod plan;
pub mod pool;
pub mod replan;
pub mod routing;
pub mod stl;
pub mod trajectory;
