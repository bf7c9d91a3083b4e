// Runs the quick examples in-process so they keep working.

mod reservoir_construction {
    include!("../examples/reservoir_construction.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod candidate_evaluation {
    include!("../examples/candidate_evaluation.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod chain_lspi {
    include!("../examples/chain_lspi.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod gridworld_dynamics {
    include!("../examples/gridworld_dynamics.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod grouping_modes {
    include!("../examples/grouping_modes.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod checkpoint_resume {
    include!("../examples/checkpoint_resume.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod cli_pipeline {
    include!("../examples/cli_pipeline.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}
