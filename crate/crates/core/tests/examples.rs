//! Every example runs to completion.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run_example().unwrap();
        }
    };
}

example!(weights);
example!(toeplitz_matvec);
example!(time_stepping);
example!(all_at_once_newton);
example!(preconditioner);
example!(convergence_table);
example!(dump_matrices);
