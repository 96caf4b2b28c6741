pub mod artifact;
pub mod dispatch;
pub mod protocol;
pub mod registry;
pub mod router;
pub mod session;
pub mod synth;

pub use artifact::{ArtifactRef, ArtifactStore};
pub use dispatch::{dispatch, dispatch_with_store, ExecutionResult, Outcome, OutcomeStatus};
pub use protocol::{parse, serialize, validate, ParsedMessage, Region, Segment, TaskKind};
pub use registry::{ExpertDescriptor, ExpertRegistry};
pub use router::{resolve_task, route, RoutingPlan, TaskInvocation};
pub use session::{update_session, SessionContext, Slot};
